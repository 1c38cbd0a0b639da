"""Riemann-sum Stratonovich integrals of ``sigma(X)`` and their convergence.

For a partition ``pi`` of ``[0, t]`` the Riemann sum is

    S_pi(t) = sum_k  (1/|cell_k|) int_{cell_k} sigma(X_s) ds  (B_{t_{k+1}} - B_{t_k})

with the cell averages taken by the trapezoid rule on the fine solver grid.
The reference ``I(t)`` is the left-point Ito sum of ``sigma(X) dB`` on the
fine grid plus ``1/2 int (grad sigma . sigma)(X_s) ds``. Both use the same
fine-grid solution, so ``S_pi - I`` isolates the partition error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import montecarlo
from .coefficients import CoefficientField, Composite, composite
from .errors import InsufficientReplicas, InvalidPoint, OffGrid
from .fitting import fit_rate_replicas
from .geometry import Domain
from .paths import BrownianPath, Partition, split_seed
from .solver import ReflectedSolution

MIN_REPLICAS = 30
EXACT_THRESHOLD = 1e-12
ROW_CHUNK = 256


@dataclass(frozen=True)
class RiemannSumResult:
    t: float
    partition: Partition
    s_pi: np.ndarray
    i_ref: np.ndarray
    diff_norm: float

    @classmethod
    def build(cls, t, partition, s_pi, i_ref) -> "RiemannSumResult":
        return cls(float(t), partition, s_pi, i_ref, float(np.linalg.norm(s_pi - i_ref)))


@dataclass(frozen=True)
class MomentEstimate:
    meshes: np.ndarray
    moments: np.ndarray
    p: int
    replicas: int
    fitted_rate: float
    ci: tuple[float, float]
    ci_lo: np.ndarray        # per-mesh bootstrap interval of the moment
    ci_hi: np.ndarray
    exact: bool = False      # all moments at machine precision; no rate is fitted
    label: str = ""

    def __post_init__(self):
        if self.replicas < MIN_REPLICAS:
            raise InsufficientReplicas(f"{self.replicas} replicas < {MIN_REPLICAS}")
        if np.any(np.diff(self.meshes) >= 0):
            raise ValueError("meshes must be strictly decreasing")

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.moments) < 0))


# ---------------------------------------------------------------------------
# array kernels (rows on axis 0, time on axis 1)

def _trapezoid_pieces(times: np.ndarray, f: np.ndarray) -> np.ndarray:
    h = np.diff(times).reshape((1, -1) + (1,) * (f.ndim - 2))
    return 0.5 * (f[:, 1:] + f[:, :-1]) * h


def riemann_partials(times: np.ndarray, sig: np.ndarray, B: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Partial Riemann sums at the partition points ``times[idx]``.

    ``sig`` is ``(N, n+1, d, d)`` on the fine grid, ``B`` is ``(N, n+1, d)``;
    returns ``(N, len(idx), d)`` with a leading zero.
    """
    pieces = _trapezoid_pieces(times, sig)[:, : idx[-1]]
    integral = np.add.reduceat(pieces, idx[:-1], axis=1)
    cells = np.diff(times[idx]).reshape(1, -1, 1, 1)
    avg = integral / cells
    dB = B[:, idx[1:]] - B[:, idx[:-1]]
    terms = np.sum(avg * dB[:, :, None, :], axis=-1)
    N, _, d = B.shape
    return np.concatenate([np.zeros((N, 1, d)), np.cumsum(terms, axis=1)], axis=1)


def reference_partials(times: np.ndarray, sig: np.ndarray, half_corr: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``I`` at every fine-grid time; ``half_corr`` is ``1/2 grad sigma . sigma``."""
    dB = np.diff(B, axis=1)
    ito = np.sum(sig[:, :-1] * dB[:, :, None, :], axis=-1)
    corr = _trapezoid_pieces(times, half_corr)
    N, _, d = B.shape
    return np.concatenate([np.zeros((N, 1, d)), np.cumsum(ito + corr, axis=1)], axis=1)


def integrands(field: CoefficientField, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``sigma(X)`` and ``1/2 (grad sigma . sigma)(X)`` along trajectories."""
    sig, bt = field.coefficients_at(x)
    return sig, bt - field.b(x)


# ---------------------------------------------------------------------------
# single-path operations

def _path_on(grid: Partition, path: BrownianPath) -> np.ndarray:
    idx = grid.index_in(path.grid)
    return path.values[idx]


def _check_t(partition: Partition, t: float) -> None:
    if t not in partition.times:
        raise OffGrid(f"time {t} is not a partition point")


def riemann_sum(solution: ReflectedSolution, field: CoefficientField, path: BrownianPath,
                partition: Partition, t: float) -> np.ndarray:
    """``S_pi(t)`` with cell averages of ``sigma(X)`` from the fine solution."""
    _check_t(partition, t)
    idx = partition.index_in(solution.grid)
    fine = solution.grid.times
    k = int(np.searchsorted(partition.times, t))
    if k == 0:
        return np.zeros(solution.dim)
    B = _path_on(solution.grid, path)
    sig = field.sigma(solution.x)
    return riemann_partials(fine, sig[None], B[None], idx[: k + 1])[0, -1]


def reference_integral(solution: ReflectedSolution, field: CoefficientField, path: BrownianPath,
                       t: float) -> np.ndarray:
    _check_t(solution.grid, t)
    k = int(np.searchsorted(solution.grid.times, t))
    B = _path_on(solution.grid, path)
    sig = field.sigma(solution.x)
    half = 0.5 * composite(field, Composite.GRAD_SIGMA_SIGMA, solution.x)
    return reference_partials(solution.grid.times, sig[None], half[None], B[None])[0, k]


def riemann_result(solution, field, path, partition, t) -> RiemannSumResult:
    return RiemannSumResult.build(t, partition, riemann_sum(solution, field, path, partition, t),
                                  reference_integral(solution, field, path, t))


# ---------------------------------------------------------------------------
# Monte Carlo studies

def _level_indices(fine: Partition, levels) -> list[np.ndarray]:
    return [Partition.dyadic(int(j)).index_in(fine) for j in levels]


def difference_norms(block: montecarlo.Block, field: CoefficientField, levels) -> np.ndarray:
    """``|S_pi(1) - I(1)|`` per (replica, point, level) for the dyadic ``levels``."""
    grid = block.grid
    sols = block.solutions
    idxs = _level_indices(grid, levels)
    P = block.points
    B_rows = np.repeat(block.B, P, axis=0)
    out = np.empty((len(sols), len(idxs)))
    for s in range(0, len(sols), ROW_CHUNK):
        x = sols.x[s:s + ROW_CHUNK]
        B = B_rows[s:s + ROW_CHUNK]
        sig, half = integrands(field, x)
        ref = reference_partials(grid.times, sig, half, B)[:, -1]
        for j, idx in enumerate(idxs):
            S = riemann_partials(grid.times, sig, B, idx)[:, -1]
            out[s:s + ROW_CHUNK, j] = np.linalg.norm(S - ref, axis=-1)
    return block.reshape(out)


def _diff_reducer(block: montecarlo.Block, domain: Domain, field: CoefficientField, levels=()):
    return difference_norms(block, field, levels)


def riemann_differences(domain: Domain, field: CoefficientField, x0_set, levels, replicas: int,
                        master_seed: int, fine_level: int = 10, workers: int | None = 1) -> np.ndarray:
    """``|S_pi(1, x0) - I(1, x0)|`` with shape ``(replicas, points, levels)``."""
    levels = [int(j) for j in levels]
    if max(levels) >= fine_level:
        raise ValueError("the fine level must be strictly finer than every study partition")
    parts = montecarlo.run_replicas(domain, field, x0_set, fine_level, master_seed, replicas,
                                    _diff_reducer, workers, levels=tuple(levels))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class ConvergenceResult:
    per_point: list[MomentEstimate]
    sup: MomentEstimate
    levels: tuple[int, ...]
    x0_set: np.ndarray


def moment_estimate(meshes, samples: np.ndarray, p: int, seed: int, label: str = "") -> MomentEstimate:
    """Moments and fitted rate from per-replica samples of shape ``(replicas, meshes)``."""
    samples = np.asarray(samples, dtype=float)
    R = samples.shape[0]
    if R < MIN_REPLICAS:
        raise InsufficientReplicas(f"{R} replicas < {MIN_REPLICAS}")
    moments = samples.mean(axis=0)
    meshes = np.asarray(meshes, dtype=float)
    if np.all(moments <= EXACT_THRESHOLD ** (2 * p)):
        return MomentEstimate(meshes, moments, p, R, float("nan"), (float("nan"), float("nan")),
                              moments.copy(), moments.copy(), exact=True, label=label)
    fit, lo, hi = fit_rate_replicas(meshes, samples, seed=seed)
    return MomentEstimate(meshes, moments, p, R, fit.slope, fit.ci, lo, hi, label=label)


def convergence_study(domain: Domain, field: CoefficientField, x0_set, p: int = 2, levels=range(4, 10),
                      replicas: int = 2000, master_seed: int = 42, fine_level: int = 10,
                      workers: int | None = 1) -> ConvergenceResult:
    if replicas < MIN_REPLICAS:
        raise InsufficientReplicas(f"{replicas} replicas < {MIN_REPLICAS}")
    x0_set = np.atleast_2d(np.asarray(x0_set, dtype=float))
    levels = tuple(int(j) for j in levels)
    D = riemann_differences(domain, field, x0_set, levels, replicas, master_seed, fine_level, workers)
    powered = D ** (2 * p)
    meshes = 2.0 ** -np.asarray(levels, dtype=float)
    seed = split_seed(master_seed, -1) & 0xFFFFFFFF
    per = [moment_estimate(meshes, powered[:, i], p, seed, label=f"x0_{i}") for i in range(len(x0_set))]
    sup = moment_estimate(meshes, powered.max(axis=1), p, seed, label="sup")
    return ConvergenceResult(per, sup, levels, x0_set)


def _gap_reducer(block: montecarlo.Block, domain, field, partition_times=(), p=2):
    """``sup_t |S_pi(t, x_i) - S_pi(t, x_0)|^p`` for every point ``i``."""
    grid = block.grid
    idx = Partition(np.asarray(partition_times)).index_in(grid)
    P = block.points
    B_rows = np.repeat(block.B, P, axis=0)
    sig = field.sigma(block.solutions.x)
    S = block.reshape(riemann_partials(grid.times, sig, B_rows, idx))  # (R, P, m, d)
    gap = np.linalg.norm(S - S[:, :1], axis=-1).max(axis=-1)
    return gap ** p


def two_point_samples(domain: Domain, field: CoefficientField, base, others, partition: Partition,
                      replicas: int, master_seed: int, p: int = 2, fine_level: int = 10,
                      workers: int | None = 1) -> np.ndarray:
    """Per-replica ``sup_t |S_pi(t, base) - S_pi(t, y)|^p`` for each ``y``; shape ``(replicas, len(others))``."""
    pts = np.vstack([np.atleast_2d(base), np.atleast_2d(others)]).astype(float)
    partition.index_in(Partition.dyadic(fine_level))
    parts = montecarlo.run_replicas(domain, field, pts, fine_level, master_seed, replicas, _gap_reducer,
                                    workers, partition_times=tuple(partition.times.tolist()), p=p)
    return np.concatenate(parts, axis=0)[:, 1:]


def two_point_gap(domain: Domain, field: CoefficientField, x, y, partition: Partition, replicas: int,
                  master_seed: int, p: int = 2, fine_level: int = 10, workers: int | None = 1) -> float:
    """``E sup_t |S_pi(t, x) - S_pi(t, y)|^p`` on common paths."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return 0.0
    if not np.all(domain.in_closure(np.vstack([x, y]))):
        raise InvalidPoint("two-point gap needs points of the closed domain")
    samples = two_point_samples(domain, field, x, y[None], partition, replicas, master_seed, p,
                                fine_level, workers)
    return float(samples[:, 0].mean())
