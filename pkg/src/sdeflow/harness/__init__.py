"""Experiment orchestration, configuration, reports and the ``sdeflow`` CLI."""
from __future__ import annotations

from ..fitting import RateFit, fit_rate
from .config import ExperimentConfig, load_config, parse_config
from .studies import (MomentTable, bound_moment_study, riemann_convergence_study, spatial_moment_study,
                      substitution_experiment, temporal_moment_study, two_point_study)

__all__ = ["ExperimentConfig", "MomentTable", "RateFit", "bound_moment_study", "fit_rate", "load_config",
           "parse_config", "riemann_convergence_study", "spatial_moment_study", "substitution_experiment",
           "temporal_moment_study", "two_point_study"]
