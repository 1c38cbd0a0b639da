"""Reflected SDEs on bounded domains: projected Euler solver, Riemann-sum
Stratonovich integrals, anticipating initial points and Monte Carlo studies."""
from __future__ import annotations

from .anticipating import (AnticipatingInitial, FlowFamily, InitialKind, draw_initial, flow_solve,
                           local_time_functionals, substitute, substitution_error)
from .coefficients import (Composite, ConstantField, CustomField, DiagonalAffineField, LinearDrift,
                           TrigonometricField, audit_lipschitz, composite, ito_drift, make_field)
from .errors import SdeflowError
from .geometry import Ellipsoid, Interval1D, PointClass, UnitBall, make_domain
from .paths import BrownianPath, Partition, cell_average, sample_path, split_seed
from .solver import ReflectedSolution, halfline_oracle, solve, solve_penalized
from .stratonovich import (MomentEstimate, RiemannSumResult, convergence_study, reference_integral,
                           riemann_sum, two_point_gap)

__version__ = "0.1.0"

__all__ = [
    "AnticipatingInitial", "BrownianPath", "Composite", "ConstantField", "CustomField",
    "DiagonalAffineField", "Ellipsoid", "FlowFamily", "InitialKind", "Interval1D", "LinearDrift",
    "MomentEstimate", "Partition", "PointClass", "ReflectedSolution", "RiemannSumResult", "SdeflowError",
    "TrigonometricField", "UnitBall", "audit_lipschitz", "cell_average", "composite", "convergence_study",
    "draw_initial", "flow_solve", "halfline_oracle", "ito_drift", "local_time_functionals", "make_domain",
    "make_field", "reference_integral", "riemann_sum", "sample_path", "solve", "solve_penalized",
    "split_seed", "substitute", "substitution_error", "two_point_gap",
]
