"""Diffusion and drift coefficients with analytic derivatives.

Index conventions (``x`` has shape ``(..., d)``):

* ``sigma(x)[..., i, j]``            = sigma_ij
* ``grad_sigma(x)[..., i, j, k]``    = d sigma_ij / d x_k
* ``hess_sigma(x)[..., i, j, k, l]`` = d^2 sigma_ij / d x_k d x_l

The composite fields use

* ``grad_sigma_sigma`` (vector):   v_i = sum_{k,j} d_k sigma_ij sigma_kj
* ``grad_sigma_sigma_tensor``:      T_ijl = sum_k d_k sigma_ij sigma_kl
  (the integrand of the dB-driven part of sigma(X_s) - sigma(X_t))
* ``grad_sigma_grad_sigma_sigma``: M_ij = sum_k d_k sigma_ij v_k
* ``grad_sigma_btilde``:           M_ij = sum_k d_k sigma_ij btilde_k
* ``sigma_hess_sigma_sigma``:      M_ij = sum_{k,l} d_k d_l sigma_ij (sigma sigma^T)_kl
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MissingDerivative
from .geometry import Domain


class Composite(str, enum.Enum):
    GRAD_SIGMA_SIGMA = "grad_sigma_sigma"
    GRAD_SIGMA_SIGMA_TENSOR = "grad_sigma_sigma_tensor"
    GRAD_SIGMA_GRAD_SIGMA_SIGMA = "grad_sigma_grad_sigma_sigma"
    GRAD_SIGMA_BTILDE = "grad_sigma_btilde"
    SIGMA_HESS_SIGMA_SIGMA = "sigma_hess_sigma_sigma"


@dataclass(frozen=True)
class LinearDrift:
    """``b(x) = matrix @ x + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    @classmethod
    def scaled_identity(cls, dim: int, coefficient: float = 0.0, offset=None) -> "LinearDrift":
        off = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
        return cls(coefficient * np.eye(dim), off)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("ij,...j->...i", self.matrix, x) + self.offset


class CoefficientField:
    """Base class; subclasses implement ``sigma``, ``grad_sigma``, ``hess_sigma``."""

    family: str = "custom"
    dim: int
    drift: Callable[[np.ndarray], np.ndarray]

    def sigma(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_sigma(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_sigma(self, x) -> np.ndarray:
        raise MissingDerivative(f"{self.family} field has no second derivative")

    def b(self, x) -> np.ndarray:
        return self.drift(np.asarray(x, dtype=float))

    def coefficients_at(self, x) -> tuple[np.ndarray, np.ndarray]:
        """``(sigma(x), btilde(x))`` in one evaluation."""
        x = np.asarray(x, dtype=float)
        s = self.sigma(x)
        return s, self.b(x) + 0.5 * _grad_sigma_sigma(self.grad_sigma(x), s)

    @property
    def is_constant(self) -> bool:
        return False


def _leading(x) -> tuple[np.ndarray, tuple[int, ...]]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x, x.shape[:-1]


@dataclass(frozen=True, eq=False)
class ConstantField(CoefficientField):
    matrix: np.ndarray
    drift: Callable = None  # type: ignore[assignment]
    family = "constant"

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", m)
        if self.drift is None:
            object.__setattr__(self, "drift", LinearDrift.scaled_identity(m.shape[0]))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.matrix.shape[0]

    @property
    def is_constant(self) -> bool:
        return True

    def coefficients_at(self, x):
        x = np.asarray(x, dtype=float)
        return self.sigma(x), self.b(x)

    def sigma(self, x):
        x, lead = _leading(x)
        return np.broadcast_to(self.matrix, lead + self.matrix.shape).copy()

    def grad_sigma(self, x):
        x, lead = _leading(x)
        d = self.dim
        return np.zeros(lead + (d, d, d))

    def hess_sigma(self, x):
        x, lead = _leading(x)
        d = self.dim
        return np.zeros(lead + (d, d, d, d))


@dataclass(frozen=True, eq=False)
class DiagonalAffineField(CoefficientField):
    """``sigma_ii(x) = intercept_i + slope_i * x_i``, off-diagonal zero."""

    intercept: np.ndarray
    slope: np.ndarray
    drift: Callable = None  # type: ignore[assignment]
    family = "diagonal_affine"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.intercept, dtype=float))
        s = np.atleast_1d(np.asarray(self.slope, dtype=float))
        if c.shape != s.shape:
            raise ValueError("intercept and slope must have the same length")
        object.__setattr__(self, "intercept", c)
        object.__setattr__(self, "slope", s)
        if self.drift is None:
            object.__setattr__(self, "drift", LinearDrift.scaled_identity(len(c)))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.intercept)

    def coefficients_at(self, x):
        x, lead = _leading(x)
        diag = self.intercept + self.slope * x
        out = np.zeros(lead + (self.dim, self.dim))
        idx = np.arange(self.dim)
        out[..., idx, idx] = diag
        return out, self.b(x) + 0.5 * self.slope * diag

    def sigma(self, x):
        x, lead = _leading(x)
        diag = self.intercept + self.slope * x
        out = np.zeros(lead + (self.dim, self.dim))
        idx = np.arange(self.dim)
        out[..., idx, idx] = diag
        return out

    def grad_sigma(self, x):
        x, lead = _leading(x)
        d = self.dim
        out = np.zeros(lead + (d, d, d))
        idx = np.arange(d)
        out[..., idx, idx, idx] = self.slope
        return out

    def hess_sigma(self, x):
        x, lead = _leading(x)
        d = self.dim
        return np.zeros(lead + (d, d, d, d))


@dataclass(frozen=True, eq=False)
class TrigonometricField(CoefficientField):
    """Diagonal ``sigma_ii(x) = amplitude * (w_i(frequency * x_i) + offset)``.

    ``w_i`` is ``sin`` for even ``i`` and ``cos`` for odd ``i``; with
    ``amplitude=0.5, offset=2`` in d=2 this is
    ``0.5 * diag(sin x_1 + 2, cos x_2 + 2)``.
    """

    dimension: int = 2
    amplitude: float = 0.5
    offset: float = 2.0
    frequency: float = 1.0
    drift: Callable = None  # type: ignore[assignment]
    family = "trigonometric"

    def __post_init__(self):
        if self.drift is None:
            object.__setattr__(self, "drift", LinearDrift.scaled_identity(self.dimension))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.dimension

    @property
    def _even(self) -> np.ndarray:
        return np.arange(self.dimension) % 2 == 0

    def _parts(self, x):
        x, lead = _leading(x)
        u = self.frequency * x
        s, c = np.sin(u), np.cos(u)
        even = self._even
        f0 = np.where(even, s, c)
        f1 = np.where(even, c, -s)
        f2 = -f0
        return lead, f0, f1, f2

    def coefficients_at(self, x):
        x, lead = _leading(x)
        u = self.frequency * x
        s, c = np.sin(u), np.cos(u)
        even = self._even
        f0 = np.where(even, s, c)
        f1 = np.where(even, c, -s)
        diag = self.amplitude * (f0 + self.offset)
        out = np.zeros(lead + (self.dim, self.dim))
        idx = np.arange(self.dim)
        out[..., idx, idx] = diag
        return out, self.b(x) + 0.5 * (self.amplitude * self.frequency * f1) * diag

    def sigma(self, x):
        lead, f0, _, _ = self._parts(x)
        out = np.zeros(lead + (self.dim, self.dim))
        idx = np.arange(self.dim)
        out[..., idx, idx] = self.amplitude * (f0 + self.offset)
        return out

    def grad_sigma(self, x):
        lead, _, f1, _ = self._parts(x)
        d = self.dim
        out = np.zeros(lead + (d, d, d))
        idx = np.arange(d)
        out[..., idx, idx, idx] = self.amplitude * self.frequency * f1
        return out

    def hess_sigma(self, x):
        lead, _, _, f2 = self._parts(x)
        d = self.dim
        out = np.zeros(lead + (d, d, d, d))
        idx = np.arange(d)
        out[..., idx, idx, idx, idx] = self.amplitude * self.frequency**2 * f2
        return out


@dataclass(frozen=True, eq=False)
class CustomField(CoefficientField):
    """User-supplied callables; derivative callbacks are mandatory except the Hessian."""

    dimension: int
    sigma_fn: Callable[[np.ndarray], np.ndarray]
    grad_sigma_fn: Callable[[np.ndarray], np.ndarray]
    drift: Callable = None  # type: ignore[assignment]
    hess_sigma_fn: Callable[[np.ndarray], np.ndarray] | None = None
    family = "custom"

    def __post_init__(self):
        if self.drift is None:
            object.__setattr__(self, "drift", LinearDrift.scaled_identity(self.dimension))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.dimension

    def sigma(self, x):
        return np.asarray(self.sigma_fn(np.asarray(x, dtype=float)), dtype=float)

    def grad_sigma(self, x):
        return np.asarray(self.grad_sigma_fn(np.asarray(x, dtype=float)), dtype=float)

    def hess_sigma(self, x):
        if self.hess_sigma_fn is None:
            raise MissingDerivative("custom field was built without hess_sigma_fn")
        return np.asarray(self.hess_sigma_fn(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# composite fields

def _grad_sigma_sigma(gs: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.einsum("...ijk,...kj->...i", gs, s)


def ito_drift(field: CoefficientField, x) -> np.ndarray:
    """``b + 1/2 grad_sigma . sigma``: the drift of the Ito form."""
    return field.coefficients_at(x)[1]


def composite(field: CoefficientField, which: Composite | str, x) -> np.ndarray:
    which = Composite(which)
    x = np.asarray(x, dtype=float)
    if which is Composite.SIGMA_HESS_SIGMA_SIGMA:
        h = field.hess_sigma(x)
        s = field.sigma(x)
        sst = np.einsum("...ka,...la->...kl", s, s)
        return np.einsum("...ijkl,...kl->...ij", h, sst)
    gs = field.grad_sigma(x)
    s = field.sigma(x)
    if which is Composite.GRAD_SIGMA_SIGMA:
        return _grad_sigma_sigma(gs, s)
    if which is Composite.GRAD_SIGMA_SIGMA_TENSOR:
        return np.einsum("...ijk,...kl->...ijl", gs, s)
    if which is Composite.GRAD_SIGMA_GRAD_SIGMA_SIGMA:
        return np.einsum("...ijk,...k->...ij", gs, _grad_sigma_sigma(gs, s))
    if which is Composite.GRAD_SIGMA_BTILDE:
        bt = field.b(x) + 0.5 * _grad_sigma_sigma(gs, s)
        return np.einsum("...ijk,...k->...ij", gs, bt)
    raise ValueError(which)


def sigma_sup(field: CoefficientField, domain: Domain, samples: int = 4096, seed: int = 0) -> float:
    """Sampled sup over the closure of the Frobenius norm of sigma."""
    if field.is_constant:
        return float(np.linalg.norm(field.sigma(np.zeros(field.dim))))
    pts = domain.sample_uniform(np.random.default_rng(seed), samples)
    vals = np.linalg.norm(field.sigma(pts), axis=(-2, -1))
    return float(vals.max())


# ---------------------------------------------------------------------------
# Lipschitz audit

AUDITED = ("sigma", "btilde") + tuple(c.value for c in Composite if c is not Composite.GRAD_SIGMA_SIGMA_TENSOR)

GROWTH_FLAG_RATIO = 1.25


@dataclass
class LipschitzReport:
    samples: int
    estimates: dict[str, float]
    doubled: dict[str, float]
    bounds: dict[str, float]
    flagged: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def k(self) -> float:
        return float(sum(v for v in self.doubled.values() if np.isfinite(v)))


def _evaluate(field: CoefficientField, name: str, x: np.ndarray) -> np.ndarray:
    if name == "sigma":
        return field.sigma(x)
    if name == "btilde":
        return ito_drift(field, x)
    return composite(field, name, x)


def _max_ratio(x: np.ndarray, f: np.ndarray, n: int, chunk: int = 256) -> float:
    """max ||f(x_i) - f(x_j)|| / |x_i - x_j| over pairs among the first ``n`` points."""
    x, f = x[:n], f[:n].reshape(n, -1)
    best = 0.0
    for s in range(0, n, chunk):
        xi, fi = x[s:s + chunk], f[s:s + chunk]
        dx = np.linalg.norm(xi[:, None, :] - x[None, :, :], axis=-1)
        df = np.linalg.norm(fi[:, None, :] - f[None, :, :], axis=-1)
        ok = dx > 0
        if np.any(ok):
            best = max(best, float(np.max(df[ok] / dx[ok])))
    return best


def audit_lipschitz(field: CoefficientField, domain: Domain, samples: int, seed: int = 0) -> LipschitzReport:
    """Empirical Lipschitz constants over the closure, at ``samples`` and ``2*samples`` points.

    The first ``samples`` points are a prefix of the doubled sample, so
    estimates never decrease with the sample count.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    pts = domain.sample_uniform(np.random.default_rng(seed), 2 * samples)
    est, dbl, bounds, missing = {}, {}, {}, []
    for name in AUDITED:
        try:
            vals = _evaluate(field, name, pts)
        except MissingDerivative:
            missing.append(name)
            continue
        est[name] = _max_ratio(pts, vals, samples)
        dbl[name] = _max_ratio(pts, vals, 2 * samples)
    for name, vals in (("sigma", field.sigma(pts)), ("btilde", ito_drift(field, pts)),
                       ("grad_sigma", field.grad_sigma(pts))):
        bounds[name] = float(np.max(np.linalg.norm(vals.reshape(len(pts), -1), axis=-1)))
    flagged = [n for n in est if dbl[n] > GROWTH_FLAG_RATIO * est[n] and dbl[n] > 1e-12]
    return LipschitzReport(samples, est, dbl, bounds, flagged, missing)


def make_field(family: str, dimension: int, drift: LinearDrift | None = None, **params) -> CoefficientField:
    family = family.lower().replace("-", "_")
    if drift is None:
        drift = LinearDrift.scaled_identity(dimension)
    if family == "constant":
        m = params.get("matrix")
        m = np.eye(dimension) if m is None else np.asarray(m, dtype=float).reshape(dimension, dimension)
        return ConstantField(m, drift)
    if family == "diagonal_affine":
        return DiagonalAffineField(np.broadcast_to(params.get("intercept", 1.0), (dimension,)),
                                   np.broadcast_to(params.get("slope", 0.0), (dimension,)), drift)
    if family == "trigonometric":
        return TrigonometricField(dimension, float(params.get("amplitude", 0.5)),
                                  float(params.get("offset", 2.0)), float(params.get("frequency", 1.0)), drift)
    raise ValueError(f"unknown coefficient family {family!r}")
