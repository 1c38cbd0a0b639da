"""Anticipating initial points, stochastic flows and substitution.

An anticipating initial point ``Z`` is a projection onto the closed domain
of a functional of the whole Brownian path. The flow ``x -> X_t(x)`` is
solved on an axis-aligned grid of initial points sharing one path, and
``X_t(x)|_{x=Z}`` is obtained by interpolating the flow; comparing it with
the direct solve ``X_t(Z)`` on the same path realizes the substitution
formula at a fixed discretization.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import montecarlo
from .coefficients import CoefficientField
from .errors import OutOfHull, SupportViolation
from .geometry import Domain
from .paths import BrownianPath, Partition, brownian_values, replica_seeds, sample_path
from .solver import ReflectedSolution, SolutionBatch, default_eps_boundary, integrate
from .stratonovich import riemann_partials

CHECKPOINTS = (0.25, 0.5, 0.75, 1.0)


class InitialKind(str, enum.Enum):
    FIXED_POINT = "fixed_point"
    PROJECTED_ENDPOINT = "projected_endpoint"
    PROJECTED_MEAN = "projected_mean"
    PROJECTED_MAX = "projected_max"


@dataclass(frozen=True)
class AnticipatingInitial:
    kind: InitialKind
    x0: tuple[float, ...] | None = None   # only for FIXED_POINT

    def __post_init__(self):
        object.__setattr__(self, "kind", InitialKind(self.kind))
        if self.kind is InitialKind.FIXED_POINT and self.x0 is None:
            raise ValueError("a fixed initial point needs x0")

    def value_of(self, path: BrownianPath, domain: Domain) -> np.ndarray:
        return draw_initial(self, path, domain)


def _path_functional(kind: InitialKind, times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Raw functional before projection; ``values`` is ``(..., n+1, d)``."""
    if kind is InitialKind.PROJECTED_ENDPOINT:
        return values[..., -1, :]
    if kind is InitialKind.PROJECTED_MEAN:
        h = np.diff(times)[:, None]
        return np.sum(0.5 * (values[..., 1:, :] + values[..., :-1, :]) * h, axis=-2) / (times[-1] - times[0])
    if kind is InitialKind.PROJECTED_MAX:
        return values.max(axis=-2)
    raise ValueError(kind)


def draw_initial(kind: AnticipatingInitial | InitialKind | str, path: BrownianPath, domain: Domain) -> np.ndarray:
    """Deterministic functional of the full path, always in the closed domain."""
    initial = kind if isinstance(kind, AnticipatingInitial) else AnticipatingInitial(InitialKind(kind))
    if path.grid.times[0] != 0.0 or path.grid.end != 1.0:
        raise ValueError("anticipating initial points need a path on all of [0, 1]")
    if initial.kind is InitialKind.FIXED_POINT:
        return np.asarray(initial.x0, dtype=float)
    raw = _path_functional(initial.kind, path.grid.times, path.values)
    return domain.project(raw)[0]


# ---------------------------------------------------------------------------
# flows

def axis_grid(domain: Domain, per_axis: int) -> tuple[np.ndarray, ...]:
    """``per_axis`` equispaced nodes per coordinate across the bounding box."""
    if per_axis < 2:
        raise ValueError("an axis grid needs at least two nodes per axis")
    lo, hi = domain.bounding_box
    return tuple(np.linspace(lo[i], hi[i], per_axis) for i in range(domain.dim))


@dataclass(frozen=True, eq=False)
class FlowFamily:
    """Flow on grid nodes inside the closed domain, all driven by one path."""

    domain: Domain
    path: BrownianPath
    axes: tuple[np.ndarray, ...]
    node_row: np.ndarray            # grid-shaped; row into ``solutions`` or -1
    nodes: np.ndarray               # (K, d)
    solutions: SolutionBatch        # K rows

    @property
    def grid(self) -> Partition:
        return self.solutions.grid

    def solution(self, k: int) -> ReflectedSolution:
        return self.solutions[k]

    def time_index(self, t: float) -> int:
        i = int(np.searchsorted(self.grid.times, t))
        if i >= len(self.grid.times) or self.grid.times[i] != t:
            raise KeyError(f"time {t} is not on the flow grid")
        return i

    def nearest_node(self, z) -> int:
        d = np.linalg.norm(self.nodes - np.asarray(z, dtype=float), axis=-1)
        return int(np.argmin(d))


def _tensor_axes(points: np.ndarray) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    axes = tuple(np.unique(points[:, i]) for i in range(points.shape[1]))
    present = np.zeros(tuple(len(a) for a in axes), dtype=bool)
    ix = tuple(np.searchsorted(axes[i], points[:, i]) for i in range(points.shape[1]))
    present[ix] = True
    return axes, present


def flow_solve(domain: Domain, field: CoefficientField, path: BrownianPath, x_grid) -> FlowFamily:
    """Solve from every grid node in the closed domain on the identical path.

    ``x_grid`` is either a tuple of per-axis node arrays (full tensor grid,
    nodes outside the closure dropped) or an explicit ``(K, d)`` point set.
    """
    if isinstance(x_grid, tuple) and all(np.ndim(a) == 1 for a in x_grid) and len(x_grid) == domain.dim:
        axes = tuple(np.asarray(a, dtype=float) for a in x_grid)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        present = domain.in_closure(mesh)
    else:
        pts = np.atleast_2d(np.asarray(x_grid, dtype=float))
        axes, present = _tensor_axes(pts)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        present &= domain.in_closure(mesh)
    node_row = np.full(present.shape, -1, dtype=np.int64)
    node_row[present] = np.arange(int(present.sum()))
    nodes = mesh[present]
    if len(nodes) == 0:
        raise OutOfHull("no grid node lies in the closed domain")
    K = len(nodes)
    B = np.broadcast_to(path.values, (K,) + path.values.shape)
    sols = integrate(domain, field, path.grid, B, nodes, seeds=np.full(K, path.seed, dtype=np.uint64))
    return FlowFamily(domain, path, axes, node_row, nodes, sols)


def _cell(axes, z) -> tuple[list[int], list[float]]:
    lows, weights = [], []
    for a, v in zip(axes, z):
        if len(a) == 1:
            lows.append(0)
            weights.append(0.0)
            continue
        i = int(np.clip(np.searchsorted(a, v, side="right") - 1, 0, len(a) - 2))
        lows.append(i)
        weights.append((v - a[i]) / (a[i + 1] - a[i]))
    return lows, weights


def substitute_flagged(family: FlowFamily, z, t: float) -> tuple[np.ndarray, bool]:
    """``X_t(x)|_{x=z}`` and whether the nearest-node fallback was used."""
    z = np.asarray(z, dtype=float)
    for a, v in zip(family.axes, z):
        if v < a[0] or v > a[-1]:
            raise OutOfHull(f"point {z} lies outside the grid hull")
    k = family.time_index(t)
    xt = family.solutions.x[:, k]
    lows, w = _cell(family.axes, z)
    value = np.zeros(family.domain.dim)
    for corner in itertools.product((0, 1), repeat=len(lows)):
        wt = 1.0
        for c, wi in zip(corner, w):
            wt *= wi if c else 1.0 - wi
        idx = tuple(min(lo + c, len(a) - 1) for lo, c, a in zip(lows, corner, family.axes))
        row = family.node_row[idx]
        if row < 0:
            if wt == 0.0:
                continue
            return xt[family.nearest_node(z)].copy(), True
        value = value + wt * xt[row]
    return value, False


def substitute(family: FlowFamily, z, t: float) -> np.ndarray:
    return substitute_flagged(family, z, t)[0]


def _as_initial(kind) -> AnticipatingInitial:
    return kind if isinstance(kind, AnticipatingInitial) else AnticipatingInitial(InitialKind(kind))


def substitution_error(domain: Domain, field: CoefficientField, path: BrownianPath, kind, t: float,
                       per_axis: int, dt_level: int) -> float:
    """``|X_t(x)|_{x=Z} - X_t(Z)|`` on one path at one discretization."""
    z = draw_initial(_as_initial(kind), path, domain)
    fine = sample_path(path.seed, Partition.dyadic(dt_level), path.dim)
    family = flow_solve(domain, field, fine, axis_grid(domain, per_axis))
    direct = integrate(domain, field, fine.grid, fine.values[None], z[None], seeds=[fine.seed])[0]
    return float(np.linalg.norm(substitute(family, z, t) - direct.x[family.time_index(t)]))


# ---------------------------------------------------------------------------
# local-time functionals

def bump(center, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth test function ``(1 - |x - c|^2 / r^2)_+^2`` supported in a ball."""
    c = np.asarray(center, dtype=float)

    def f(x):
        r2 = np.sum((np.asarray(x, dtype=float) - c) ** 2, axis=-1) / radius**2
        return np.maximum(1.0 - r2, 0.0) ** 2

    return f


def check_support(f: Callable, domain: Domain, eps: float, points=None, samples: int = 4096, seed: int = 0) -> None:
    """Raise ``SupportViolation`` if ``f`` is nonzero within ``eps`` of the boundary."""
    rng = np.random.default_rng(seed)
    probe = domain.sample_uniform(rng, samples)
    if points is not None:
        probe = np.vstack([probe, np.asarray(points, dtype=float).reshape(-1, domain.dim)])
    band = probe[domain.boundary_distance(probe) <= eps]
    if len(band) and np.any(np.asarray(f(band)) != 0.0):
        raise SupportViolation(f"test function is nonzero within {eps} of the boundary")


def local_time_functionals(solution: ReflectedSolution, f: Callable, domain: Domain | None = None,
                           eps: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``F(t) = int f(X) d|L|`` and ``G(t) = int xi(X) d|L|`` on the grid.

    The local-time increment of step ``k`` is attributed to the reflection
    point ``x[k+1]``. ``G`` is the running sum of the stored increments and
    equals ``l``. With ``domain`` and ``eps`` given, the support of ``f`` is
    checked against the boundary band first.
    """
    if domain is not None and eps is not None:
        check_support(f, domain, eps, points=solution.x)
    mag = np.sqrt(np.sum(solution.dl * solution.dl, axis=-1))
    fx = np.asarray(f(solution.x[1:]), dtype=float)
    F = np.concatenate([[0.0], np.cumsum(fx * mag)])
    G = np.concatenate([np.zeros((1, solution.dim)), np.cumsum(solution.dl, axis=0)], axis=0)
    return F, G


def riemann_substitution_gap(family: FlowFamily, field: CoefficientField, z, partition: Partition,
                             t: float) -> float:
    """``|S_pi(t, x)|_{x=z} - S_pi(t, z)|`` using the nearest-node flow solution.

    The right side comes from a direct solve from ``z`` on the family's
    path; when ``z`` is a node both sides are the same computation.
    """
    z = np.asarray(z, dtype=float)
    idx = partition.truncate(t).index_in(family.grid)
    times = family.grid.times
    node = family.nearest_node(z)
    B = family.path.values[None]
    direct = integrate(family.domain, field, family.grid, B, z[None], seeds=[family.path.seed])
    lhs = riemann_partials(times, field.sigma(family.solutions.x[node:node + 1]), B, idx)[0, -1]
    rhs = riemann_partials(times, field.sigma(direct.x), B, idx)[0, -1]
    return float(np.linalg.norm(lhs - rhs))


def adjacent_sup_gap(family: FlowFamily, values: np.ndarray) -> float:
    """Max over axis-adjacent node pairs of ``sup_t |V(t, x) - V(t, x')|``.

    ``values`` is ``(K, n+1)`` or ``(K, n+1, m)`` per node.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[..., None]
    best = 0.0
    rows = family.node_row
    for ax in range(rows.ndim):
        a = np.moveaxis(rows, ax, 0)
        left, right = a[:-1].ravel(), a[1:].ravel()
        ok = (left >= 0) & (right >= 0)
        if np.any(ok):
            gap = np.linalg.norm(v[left[ok]] - v[right[ok]], axis=-1).max()
            best = max(best, float(gap))
    return best


# ---------------------------------------------------------------------------
# substitution study over many paths

@dataclass(frozen=True)
class SubstitutionRecord:
    path_seed: int
    kind: str
    t: float
    z: np.ndarray
    err: float
    nearest_node_flag: bool
    err_snapped: float        # same comparison with Z snapped to its nearest node
    riemann_gap_snapped: float
    f_mass: float             # F(t, Z) for the interior bump test function


@dataclass(frozen=True)
class _SubTask:
    domain: Domain
    field: CoefficientField
    kind: AnticipatingInitial
    per_axis: int
    dt_level: int
    seeds: tuple[int, ...]
    checkpoints: tuple[float, ...]
    eps: float
    riemann_level: int


def interior_bump(domain: Domain, eps: float) -> Callable[[np.ndarray], np.ndarray]:
    """Bump at the domain center whose support stays ``2 * eps`` away from the boundary."""
    c = domain.center
    radius = float(domain.boundary_distance(c)) - 2.0 * eps
    if radius <= 0:
        raise SupportViolation("the boundary band leaves no room for an interior test function")
    return bump(c, radius)


def _substitution_block(task: _SubTask) -> list[SubstitutionRecord]:
    dom, field, d = task.domain, task.field, task.domain.dim
    grid = Partition.dyadic(task.dt_level)
    seeds = np.asarray(task.seeds, dtype=np.uint64)
    B = brownian_values(seeds, grid.times, d)
    axes = axis_grid(dom, task.per_axis)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    present = dom.in_closure(mesh)
    node_row = np.full(present.shape, -1, dtype=np.int64)
    node_row[present] = np.arange(int(present.sum()))
    nodes = mesh[present]
    K, R = len(nodes), len(seeds)
    flows = integrate(dom, field, grid, np.repeat(B, K, axis=0), np.tile(nodes, (R, 1)),
                      seeds=np.repeat(seeds, K))
    if task.kind.kind is InitialKind.FIXED_POINT:
        Z = np.tile(np.asarray(task.kind.x0, dtype=float), (R, 1))
    else:
        Z = dom.project(_path_functional(task.kind.kind, grid.times, B))[0]
    direct = integrate(dom, field, grid, B, Z, seeds=seeds)
    snap_idx = np.array([int(np.argmin(np.linalg.norm(nodes - z, axis=-1))) for z in Z])
    snapped = integrate(dom, field, grid, B, nodes[snap_idx], seeds=seeds)
    f = interior_bump(dom, task.eps)
    check_support(f, dom, task.eps, points=direct.x)
    coarse = Partition.dyadic(min(task.riemann_level, task.dt_level))
    sig_flow = field.sigma(flows.x)
    sig_snap = field.sigma(snapped.x)
    out = []
    for r in range(R):
        sl = slice(r * K, (r + 1) * K)
        path = BrownianPath(int(seeds[r]), grid, B[r])
        fam = FlowFamily(dom, path, axes, node_row, nodes, flows_rows(flows, sl))
        F, _ = local_time_functionals(direct[r], f)
        row = r * K + snap_idx[r]
        for t in task.checkpoints:
            k = fam.time_index(t)
            val, flag = substitute_flagged(fam, Z[r], t)
            err = float(np.linalg.norm(val - direct.x[r, k]))
            err_snap = float(np.linalg.norm(flows.x[row, k] - snapped.x[r, k]))
            idx = coarse.truncate(t).index_in(grid)
            lhs = riemann_partials(grid.times, sig_flow[row:row + 1], B[r:r + 1], idx)[0, -1]
            rhs = riemann_partials(grid.times, sig_snap[r:r + 1], B[r:r + 1], idx)[0, -1]
            out.append(SubstitutionRecord(int(seeds[r]), task.kind.kind.value, float(t), Z[r].copy(), err,
                                          flag, err_snap, float(np.linalg.norm(lhs - rhs)), float(F[k])))
    return out


def flows_rows(batch: SolutionBatch, sl: slice) -> SolutionBatch:
    return SolutionBatch(batch.grid, batch.x[sl], batch.l[sl], batch.l_tv[sl], batch.boundary_flags[sl],
                         batch.dl[sl], batch.drift[sl], batch.noise[sl], batch.substeps[sl])


def substitution_study(domain: Domain, field: CoefficientField, kind, paths: int, master_seed: int,
                       per_axis: int, dt_level: int, checkpoints=CHECKPOINTS, workers: int | None = 1,
                       block_size: int = 10, eps: float | None = None,
                       riemann_level: int = 6) -> list[SubstitutionRecord]:
    """Substitution errors for replica paths ``0..paths-1`` of ``master_seed``.

    ``eps`` is the boundary band for the local-time check; by default the
    solver's band at this time step.
    """
    initial = _as_initial(kind)
    if eps is None:
        eps = default_eps_boundary(domain, field, 2.0 ** -dt_level)
    seeds = [int(s) for s in replica_seeds(master_seed, paths)]
    tasks = [_SubTask(domain, field, initial, per_axis, dt_level, tuple(seeds[i:i + block_size]),
                      tuple(float(t) for t in checkpoints), float(eps), int(riemann_level))
             for i in range(0, paths, block_size)]
    return [rec for part in montecarlo.map_ordered(_substitution_block, tasks, workers) for rec in part]


def refined(per_axis: int, dt_level: int) -> tuple[int, int]:
    """One joint refinement: grid spacing and time step both halved."""
    return 2 * (per_axis - 1) + 1, dt_level + 1
