"""Reflected SDE solver: projected Euler scheme in Ito form.

``X_{k+1} = P(X_k + btilde(X_k) dt + sigma(X_k) dB_k)`` with ``P`` the
closest-point projection onto the closure of the domain. The residual of the
projection is the local-time increment ``dl_k``, so that

    x[k] = x0 + sum(drift) + sum(noise) - l[k]

holds step by step. A penalized Euler scheme and the exact one-sided
Skorokhod map serve as independent checks.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientField, sigma_sup
from .errors import InvalidPoint, PenaltyBlowup
from .geometry import Domain, PointClass
from .paths import BrownianPath, Partition, brownian_values

EXCURSION_FRACTION = 0.1
MAX_HALVINGS = 8
BLOWUP_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class ReflectedSolution:
    grid: Partition
    x: np.ndarray               # (n+1, d)
    l: np.ndarray               # (n+1, d)
    l_tv: np.ndarray            # (n+1,)
    boundary_flags: np.ndarray  # (n,) reflection fired during step k
    dl: np.ndarray              # (n, d) local-time increment of step k; l = cumsum(dl)
    drift: np.ndarray           # (n, d) applied sum of btilde * dt
    noise: np.ndarray           # (n, d) applied sum of sigma * dB
    substeps: np.ndarray        # (n,) number of sub-steps used (1 = none)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.grid.times, t))
        if i >= len(self.grid.times) or self.grid.times[i] != t:
            raise KeyError(f"time {t} is not on the solution grid")
        return self.x[i]

    def write_csv(self, path) -> None:
        d = self.dim
        header = ["t"] + [f"x_{i + 1}" for i in range(d)] + [f"l_{i + 1}" for i in range(d)] + ["l_tv", "boundary_flag"]
        flags = np.concatenate([[False], self.boundary_flags])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.grid.times):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.l[k]] + [repr(float(self.l_tv[k])), int(flags[k])])


@dataclass(frozen=True, eq=False)
class SolutionBatch:
    """Solutions for ``N`` independent rows sharing one time grid."""

    grid: Partition
    x: np.ndarray               # (N, n+1, d)
    l: np.ndarray
    l_tv: np.ndarray            # (N, n+1)
    boundary_flags: np.ndarray  # (N, n)
    dl: np.ndarray              # (N, n, d)
    drift: np.ndarray
    noise: np.ndarray
    substeps: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> ReflectedSolution:
        return ReflectedSolution(self.grid, self.x[i], self.l[i], self.l_tv[i], self.boundary_flags[i],
                                 self.dl[i], self.drift[i], self.noise[i], self.substeps[i])


def _noise(sig: np.ndarray, dB: np.ndarray) -> np.ndarray:
    return np.sum(sig * dB[..., None, :], axis=-1)


def step_project(domain: Domain, field: CoefficientField, x_k, dt: float, dB) -> tuple[np.ndarray, np.ndarray]:
    """One projected Euler step; returns ``(x_next, dl)`` with ``x_next = y - dl``."""
    x_k = np.asarray(x_k, dtype=float)
    sig, bt = field.coefficients_at(x_k)
    y = x_k + bt * dt + _noise(sig, np.asarray(dB, dtype=float))
    return domain.project(y)


def default_eps_boundary(domain: Domain, field: CoefficientField, dt: float, factor: float = 2.0) -> float:
    """Width of the band that local time is attributed to: ``factor * sqrt(dt) * sup|sigma|``."""
    return factor * np.sqrt(dt) * sigma_sup(field, domain)


def _check_start(domain: Domain, x0: np.ndarray) -> None:
    if not np.all(np.isfinite(x0)):
        raise InvalidPoint("non-finite initial point")
    if np.any(domain.classify(x0) == PointClass.EXTERIOR):
        raise InvalidPoint("initial point outside the closed domain")


class _Stepper:
    """Projected Euler step with recursive halving of oversized excursions.

    A step whose projection residual exceeds ``EXCURSION_FRACTION * diameter``
    is replaced by two half steps; the Brownian midpoint is the canonical
    value of the row's path, which is available when row seeds are known.
    """

    def __init__(self, domain, field, seeds, guard):
        self.domain = domain
        self.field = field
        self.seeds = None if seeds is None else np.asarray(seeds, dtype=np.uint64)
        self.guard = guard and self.seeds is not None
        self.threshold = EXCURSION_FRACTION * domain.diameter

    def advance(self, x, t0, t1, B0, B1, rows, depth=0):
        sig, bt = self.field.coefficients_at(x)
        drift = bt * (t1 - t0)
        noise = _noise(sig, B1 - B0)
        xn, dl = self.domain.project(x + drift + noise)
        nsub = np.ones(len(x), dtype=np.int64)
        if not self.guard or depth >= MAX_HALVINGS:
            return xn, dl, drift, noise, nsub
        big = np.linalg.norm(dl, axis=-1) > self.threshold
        if not np.any(big):
            return xn, dl, drift, noise, nsub
        sub = np.nonzero(big)[0]
        tm = 0.5 * (t0 + t1)
        Bm = brownian_values(self.seeds[rows[sub]], [tm], x.shape[-1])[:, 0]
        xa, dla, dra, noa, na = self.advance(x[sub], t0, tm, B0[sub], Bm, rows[sub], depth + 1)
        xb, dlb, drb, nob, nb = self.advance(xa, tm, t1, Bm, B1[sub], rows[sub], depth + 1)
        xn[sub], dl[sub] = xb, dla + dlb
        drift[sub], noise[sub] = dra + drb, noa + nob
        nsub[sub] = na + nb
        return xn, dl, drift, noise, nsub


def integrate(domain: Domain, field: CoefficientField, grid: Partition, B: np.ndarray, x0,
              seeds=None, guard: bool = True) -> SolutionBatch:
    """Projected scheme for ``N`` rows of Brownian values ``B`` of shape ``(N, n+1, d)``.

    ``seeds`` (one per row) enables the excursion guard.
    """
    B = np.asarray(B, dtype=float)
    N, n1, d = B.shape
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (N, d)))
    _check_start(domain, x)
    times = grid.times
    n = n1 - 1
    Bt = np.ascontiguousarray(B.transpose(1, 0, 2))
    xs = np.empty((n1, N, d))
    dls = np.empty((n, N, d))
    drifts = np.empty((n, N, d))
    noises = np.empty((n, N, d))
    nsubs = np.empty((n, N), dtype=np.int64)
    xs[0] = x
    stepper = _Stepper(domain, field, seeds, guard)
    rows = np.arange(N)
    for k in range(n):
        x, dls[k], drifts[k], noises[k], nsubs[k] = stepper.advance(
            x, times[k], times[k + 1], Bt[k], Bt[k + 1], rows)
        xs[k + 1] = x
    return _assemble(grid, xs, dls, drifts, noises, nsubs)


def _assemble(grid, xs, dls, drifts, noises, nsubs, flags=None) -> SolutionBatch:
    """Batch from time-major step arrays; ``l`` and ``l_tv`` are running sums."""
    def tm(a):
        return np.ascontiguousarray(np.swapaxes(a, 0, 1))

    n, N, d = dls.shape
    dl = tm(dls)
    mag = np.sqrt(np.sum(dl * dl, axis=-1))
    l = np.concatenate([np.zeros((N, 1, d)), np.cumsum(dl, axis=1)], axis=1)
    l_tv = np.concatenate([np.zeros((N, 1)), np.cumsum(mag, axis=1)], axis=1)
    flags = mag > 0 if flags is None else tm(flags)
    return SolutionBatch(grid, tm(xs), l, l_tv, flags, dl, tm(drifts), tm(noises), tm(nsubs))


def solve(domain: Domain, field: CoefficientField, path: BrownianPath, x0, guard: bool = True) -> ReflectedSolution:
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    batch = integrate(domain, field, path.grid, path.values[None], x0, seeds=[path.seed], guard=guard)
    return batch[0]


def integrate_penalized(domain: Domain, field: CoefficientField, grid: Partition, B: np.ndarray, x0,
                        lam: float) -> SolutionBatch:
    """Unconstrained Euler with the outward penalty drift ``-lam * max(phi, 0) * grad_phi``.

    ``l`` accumulates the penalty term so the same discrete identity holds
    as for the projected scheme.
    """
    if lam < 0:
        raise ValueError("penalty strength must be nonnegative")
    B = np.asarray(B, dtype=float)
    N, n1, d = B.shape
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (N, d)))
    _check_start(domain, x)
    times = grid.times
    n = n1 - 1
    Bt = np.ascontiguousarray(B.transpose(1, 0, 2))
    xs = np.empty((n1, N, d))
    dls = np.zeros((n, N, d))
    drifts = np.empty((n, N, d))
    noises = np.empty((n, N, d))
    flags = np.zeros((n, N), dtype=bool)
    xs[0] = x
    limit = BLOWUP_FACTOR * domain.diameter
    center = domain.center
    for k in range(n):
        sig, bt = field.coefficients_at(x)
        drifts[k] = bt * (times[k + 1] - times[k])
        noises[k] = _noise(sig, Bt[k + 1] - Bt[k])
        excess = np.maximum(domain.phi(x), 0.0)
        active = (excess > 0) & (lam > 0)
        if np.any(active):
            dls[k][active] = lam * excess[active, None] * domain.grad_phi(x[active]) * (times[k + 1] - times[k])
        x = x + drifts[k] + noises[k] - dls[k]
        if np.any(np.linalg.norm(x - center, axis=-1) > limit):
            raise PenaltyBlowup(f"penalized trajectory left {BLOWUP_FACTOR} diameters at step {k + 1}")
        xs[k + 1] = x
        flags[k] = active
    return _assemble(grid, xs, dls, drifts, noises, np.ones((n, N), dtype=np.int64), flags)


def solve_penalized(domain: Domain, field: CoefficientField, path: BrownianPath, x0, lam: float) -> ReflectedSolution:
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    return integrate_penalized(domain, field, path.grid, path.values[None], x0, lam)[0]


def skorokhod_halfline(W: np.ndarray, x0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact reflection at 0 of ``x0 + W`` on grid points; returns ``(X, L)``.

    ``L_t = max(0, max_{s <= t} (-x0 - W_s))``; ``W`` has time on the last axis.
    """
    W = np.asarray(W, dtype=float)
    L = np.maximum.accumulate(np.maximum(-x0 - W, 0.0), axis=-1)
    return x0 + W + L, L


def halfline_oracle(path: BrownianPath, x0: float = 0.0) -> ReflectedSolution:
    if path.dim != 1:
        raise ValueError("the half-line oracle is one-dimensional")
    if x0 < 0:
        raise InvalidPoint("x0 must be nonnegative")
    X, L = skorokhod_halfline(path.values[:, 0], x0)
    # outward normal at 0 is -1: in the x = x0 + W - l convention, l = -L
    l = -L[:, None]
    dl = np.diff(l, axis=0)
    n = len(path.grid) - 1
    return ReflectedSolution(path.grid, X[:, None], l, L.copy(), np.abs(dl[:, 0]) > 0, dl,
                             np.zeros((n, 1)), np.diff(path.values, axis=0), np.ones(n, dtype=np.int64))
