"""Bounded convex domains with shape function, normals and closest-point projection.

Every domain uses the sign convention ``phi < 0`` inside, ``phi = 0`` on the
boundary and ``phi > 0`` outside, and outward normals are derived from
``grad_phi``. All methods are vectorized over leading axes: a point array of
shape ``(..., d)`` maps to ``(...)`` scalars or ``(..., d)`` vectors.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidPoint, NotOnBoundary, ProjectionDiverged

TOL_BOUNDARY = 1e-9

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-12
BISECTION_MAX_ITER = 2200


class PointClass(enum.IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    EXTERIOR = 2


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise InvalidPoint(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


class Domain:
    """Common surface of the domain catalog.

    Subclasses provide ``phi``, ``grad_phi``, ``_project_outside``,
    ``boundary_distance``, ``bounding_box`` and ``diameter``.
    """

    dim: int
    alpha: float
    c0: float
    tol_boundary: float

    kind: str = ""

    # -- shape function -------------------------------------------------
    def phi(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_phi(self, x) -> np.ndarray:
        raise NotImplementedError

    # -- membership ------------------------------------------------------
    def classify(self, x) -> np.ndarray:
        """Integer ``PointClass`` codes for an array of points."""
        x = _as_points(x, self.dim)
        if not np.all(np.isfinite(x)):
            raise InvalidPoint("non-finite coordinates")
        ph = self.phi(x)
        out = np.full(ph.shape, int(PointClass.BOUNDARY), dtype=np.int8)
        out[ph < -self.tol_boundary] = PointClass.INTERIOR
        out[ph > self.tol_boundary] = PointClass.EXTERIOR
        return out

    def contains(self, x) -> PointClass:
        x = _as_points(x, self.dim)
        if x.ndim != 1:
            raise InvalidPoint("contains() takes a single point; use classify() for arrays")
        return PointClass(int(self.classify(x)))

    def in_closure(self, x) -> np.ndarray:
        return self.classify(x) != PointClass.EXTERIOR

    # -- projection ------------------------------------------------------
    def project(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Closest point of the closure and the residual ``y - x``.

        Points with ``phi(y) <= 0`` are returned unchanged with a zero residual.
        """
        y = _as_points(y, self.dim)
        if not np.all(np.isfinite(y)):
            raise InvalidPoint("non-finite coordinates")
        x = y.copy()
        outside = self.phi(y) > 0.0
        if np.any(outside):
            x[outside] = self._project_outside(y[outside])
        return x, y - x

    def _project_outside(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def outward_normal(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        if np.any(np.abs(self.phi(x)) > self.tol_boundary):
            raise NotOnBoundary("point is not within tol_boundary of the boundary")
        return self.normal_field(x)

    def normal_field(self, x) -> np.ndarray:
        """``grad_phi / |grad_phi|`` without the on-boundary check."""
        g = self.grad_phi(x)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    # -- misc --------------------------------------------------------------
    def boundary_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounding_box
        return 0.5 * (lo + hi)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform points of the closure by rejection from the bounding box."""
        lo, hi = self.bounding_box
        out = np.empty((0, self.dim))
        while len(out) < n:
            cand = rng.uniform(lo, hi, size=(2 * n + 16, self.dim))
            out = np.concatenate([out, cand[self.phi(cand) <= 0.0]])
        return out[:n]


@dataclass(frozen=True)
class UnitBall(Domain):
    dim: int = 2
    alpha: float = 1.0
    c0: float = 0.0
    tol_boundary: float = TOL_BOUNDARY

    kind = "ball"

    def phi(self, x):
        x = _as_points(x, self.dim)
        return np.sum(x * x, axis=-1) - 1.0

    def grad_phi(self, x):
        return 2.0 * _as_points(x, self.dim)

    def _project_outside(self, y):
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def boundary_distance(self, x):
        return np.abs(1.0 - np.linalg.norm(_as_points(x, self.dim), axis=-1))

    @property
    def bounding_box(self):
        return -np.ones(self.dim), np.ones(self.dim)

    @property
    def diameter(self):
        return 2.0


@dataclass(frozen=True)
class Interval1D(Domain):
    """The interval ``(lo, hi)``; ``phi`` is scaled to have unit slope at both ends."""

    lo: float = -1.0
    hi: float = 1.0
    alpha: float = 1.0
    c0: float = 0.0
    tol_boundary: float = TOL_BOUNDARY

    kind = "interval"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("Interval1D needs lo < hi")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return 1

    def phi(self, x):
        x = _as_points(x, 1)[..., 0]
        return (x - self.lo) * (x - self.hi) / (self.hi - self.lo)

    def grad_phi(self, x):
        x = _as_points(x, 1)
        return (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)

    def _project_outside(self, y):
        return np.clip(y, self.lo, self.hi)

    def boundary_distance(self, x):
        x = _as_points(x, 1)[..., 0]
        return np.minimum(np.abs(x - self.lo), np.abs(self.hi - x))

    @property
    def bounding_box(self):
        return np.array([self.lo]), np.array([self.hi])

    @property
    def diameter(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class Ellipsoid(Domain):
    """Axis-aligned ellipsoid centered at the origin, ``phi = sum (x_i/a_i)^2 - 1``."""

    semi_axes: tuple[float, ...] = (2.0, 1.0)
    alpha: float = 1.0
    c0: float = 0.0
    tol_boundary: float = TOL_BOUNDARY

    kind = "ellipsoid"

    def __post_init__(self):
        a = tuple(float(v) for v in self.semi_axes)
        if not a or min(a) <= 0:
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "semi_axes", a)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.semi_axes)

    @property
    def _a2(self) -> np.ndarray:
        return np.asarray(self.semi_axes) ** 2

    def phi(self, x):
        x = _as_points(x, self.dim)
        return np.sum(x * x / self._a2, axis=-1) - 1.0

    def grad_phi(self, x):
        return 2.0 * _as_points(x, self.dim) / self._a2

    def _secular_root(self, y: np.ndarray, shift: float, mu_lo: np.ndarray, mu_hi: np.ndarray,
                      mu0: np.ndarray) -> np.ndarray:
        """Root ``mu`` of ``g = sum (a_i y_i / (a_i^2 - shift + mu))^2 - 1`` in a bracket.

        The multiplier of the closest-point problem is ``lam = mu - shift``;
        solving for ``mu`` keeps the smallest denominator exact when it is tiny.
        ``g`` is decreasing on the bracket. Newton steps are safeguarded by the
        bracket, and iterates that leave it are replaced by bisection.
        """
        a2s = self._a2 - shift
        ay2 = self._a2 * y * y
        lo, hi = mu_lo.copy(), mu_hi.copy()
        mu = mu0.copy()
        done = np.zeros(len(y), dtype=bool)
        polished = np.zeros(len(y), dtype=bool)

        def tol(m):
            return NEWTON_TOL * np.min(np.abs(a2s + m[:, None]), axis=-1)

        for _ in range(NEWTON_MAX_ITER):
            den = a2s + mu[:, None]
            g = np.sum(ay2 / den**2, axis=-1) - 1.0
            dg = -2.0 * np.sum(ay2 / den**3, axis=-1)
            hi = np.where(g < 0, mu, hi)
            lo = np.where(g > 0, mu, lo)
            step = np.where(dg != 0, g / np.where(dg != 0, dg, 1.0), 0.0)
            new = mu - step
            bad = ~((new >= lo) & (new <= hi)) | ~np.isfinite(new)
            new = np.where(bad, 0.5 * (lo + hi), new)
            new = np.where(g == 0, mu, new)
            conv = (np.abs(new - mu) <= tol(mu)) | (g == 0)
            mu = np.where(done, mu, new)
            # one extra Newton step after the tolerance is met brings g to rounding level
            done |= conv & polished
            polished |= conv
            if done.all():
                return mu
        # bisection fallback on the rows Newton left unconverged
        rows = np.nonzero(~done)[0]
        lo, hi, ay2 = lo[rows], hi[rows], ay2[rows]
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            g = np.sum(ay2 / (a2s + mid[:, None]) ** 2, axis=-1) - 1.0
            lo = np.where(g > 0, mid, lo)
            hi = np.where(g > 0, hi, mid)
            mid = 0.5 * (lo + hi)
            if np.all((hi - lo <= tol(lo)) | (mid == lo) | (mid == hi)):
                mu[rows] = mid
                return mu
        raise ProjectionDiverged(NEWTON_MAX_ITER + BISECTION_MAX_ITER)

    def _project_outside(self, y):
        a2 = self._a2
        hi = np.linalg.norm(y, axis=-1) * np.sqrt(a2.max()) + 1.0
        zero = np.zeros(len(y))
        lam = self._secular_root(y, 0.0, zero, hi, zero)
        return a2 * y / (a2 + lam[:, None])

    def boundary_distance(self, x):
        x = _as_points(x, self.dim)
        flat = x.reshape(-1, self.dim)
        out = np.empty(len(flat))
        ph = self.phi(flat)
        outside = ph > 0
        if np.any(outside):
            proj = self._project_outside(flat[outside])
            out[outside] = np.linalg.norm(flat[outside] - proj, axis=-1)
        inside = ~outside
        if np.any(inside):
            y = flat[inside].copy()
            a2 = self._a2
            # Off the minor-axis hyperplane the root lies in (-min a^2, 0];
            # points on that hyperplane are nudged off it.
            k = int(np.argmin(a2))
            nudge = 1e-9 * np.sqrt(a2[k])
            y[:, k] = np.where(np.abs(y[:, k]) < nudge, nudge, y[:, k])
            shift = float(a2[k])
            n = len(y)
            mu = self._secular_root(y, shift, np.zeros(n), np.full(n, shift), np.full(n, 0.5 * shift))
            proj = a2 * y / (a2 - shift + mu[:, None])
            out[inside] = np.linalg.norm(flat[inside] - proj, axis=-1)
        return out.reshape(x.shape[:-1])

    @property
    def bounding_box(self):
        a = np.asarray(self.semi_axes)
        return -a, a.copy()

    @property
    def diameter(self):
        return 2.0 * max(self.semi_axes)


def make_domain(kind: str, dimension: int = 2, semi_axes=None, lo: float = -1.0, hi: float = 1.0,
                alpha: float = 1.0) -> Domain:
    kind = kind.lower()
    if kind in ("ball", "unit_ball", "unitball"):
        return UnitBall(dim=int(dimension), alpha=alpha)
    if kind == "ellipsoid":
        if semi_axes is None:
            raise ValueError("ellipsoid needs semi_axes")
        return Ellipsoid(semi_axes=tuple(semi_axes), alpha=alpha)
    if kind in ("interval", "interval1d"):
        return Interval1D(lo=lo, hi=hi, alpha=alpha)
    raise ValueError(f"unknown domain kind {kind!r}")
