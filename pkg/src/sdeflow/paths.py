"""Brownian paths on refinable partitions of [0, 1].

The value of the path at a time ``t`` is a deterministic function of
``(seed, t)`` alone. Every float in [0, 1] is a dyadic rational
``k / 2**j``; ``B_1`` is drawn first and each further time is filled by the
Brownian-bridge midpoint rule from its two dyadic parents (Levy's
construction). The standard normal attached to time ``t`` and coordinate
``c`` is obtained by hashing ``(seed, float bits of t, c)``. Refining a grid,
in any order, therefore never changes values already present.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from .errors import InsufficientSamples, NotNested, OffGrid

MAX_DEPTH = 60

_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def split_seed(master_seed: int, replica: int) -> int:
    """Seed of replica ``r``: splitmix64 of ``master + (r + 1) * golden``."""
    z = (int(master_seed) + (int(replica) + 1) * _GOLDEN) & 0xFFFFFFFFFFFFFFFF
    return int(_mix64(np.array([z], dtype=np.uint64))[0])


def replica_seeds(master_seed: int, replicas: int, start: int = 0) -> np.ndarray:
    return np.array([split_seed(master_seed, r) for r in range(start, start + replicas)], dtype=np.uint64)


def _time_bits(times: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(times, dtype=np.float64).view(np.uint64)


def keyed_normals(seeds: np.ndarray, times: np.ndarray, dim: int) -> np.ndarray:
    """Standard normals indexed by (seed, time, coordinate); shape ``(R, n, dim)``."""
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1, 1)
    tb = _mix64(_time_bits(np.asarray(times, dtype=float)) + np.uint64(_GOLDEN)).reshape(1, -1, 1)
    comp = _mix64(np.arange(1, dim + 1, dtype=np.uint64) * np.uint64(0xD1B54A32D192ED03)).reshape(1, 1, -1)
    with np.errstate(over="ignore"):
        h = _mix64(_mix64(seeds ^ tb) + comp)
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


# ---------------------------------------------------------------------------
# Levy construction plan

@dataclass(frozen=True)
class _Plan:
    times: np.ndarray        # closure of the requested times under dyadic parents
    levels: tuple            # per depth: (idx, left, right, std)
    one: int                 # index of t = 1 in ``times``
    lookup: np.ndarray       # index into ``times`` of each requested time


def _dyadic(t: float) -> tuple[int, int]:
    num, den = float(t).as_integer_ratio()
    depth = den.bit_length() - 1
    if depth > MAX_DEPTH:
        raise ValueError(f"time {t!r} needs dyadic depth {depth} > {MAX_DEPTH}")
    return num, depth


@lru_cache(maxsize=64)
def _plan_cached(key: bytes) -> _Plan:
    req = np.frombuffer(key, dtype=np.float64)
    if np.any(req < 0) or np.any(req > 1) or not np.all(np.isfinite(req)):
        raise ValueError("path times must lie in [0, 1]")
    dy = [_dyadic(t) for t in np.unique(req)]
    J = max(d for _, d in dy)
    scale = 1 << J
    pts = {n << (J - d) for n, d in dy} | {0, scale}
    # close under parents, deepest level first
    for level in range(J, 0, -1):
        step = 1 << (J - level)
        at = [p for p in pts if (p >> (J - level)) & 1 and p % step == 0]
        for p in at:
            pts.add(p - step)
            pts.add(p + step)
    ints = np.array(sorted(pts), dtype=np.int64)
    times = ints.astype(np.float64) / float(scale)
    pos = {int(p): i for i, p in enumerate(ints)}
    low = ints & -ints
    depth = np.where(ints == 0, 0, J - np.log2(np.where(low == 0, 1, low)).astype(np.int64))
    depth[ints == scale] = 0
    levels = []
    for j in range(1, J + 1):
        sel = np.nonzero(depth == j)[0]
        if len(sel) == 0:
            continue
        step = 1 << (J - j)
        left = np.array([pos[int(ints[i]) - step] for i in sel], dtype=np.int64)
        right = np.array([pos[int(ints[i]) + step] for i in sel], dtype=np.int64)
        levels.append((sel, left, right, float(np.sqrt(2.0 ** -(j + 1)))))
    lookup = np.searchsorted(times, req)
    return _Plan(times, tuple(levels), pos[scale], lookup)


def brownian_values(seeds, times, dim: int) -> np.ndarray:
    """Canonical Brownian values ``B(seed, t)``; shape ``(R, len(times), dim)``."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    times = np.ascontiguousarray(times, dtype=np.float64)
    plan = _plan_cached(times.tobytes())
    z = keyed_normals(seeds, plan.times, dim)
    v = np.zeros_like(z)
    v[:, plan.one] = z[:, plan.one]
    for idx, left, right, std in plan.levels:
        v[:, idx] = 0.5 * (v[:, left] + v[:, right]) + std * z[:, idx]
    return v[:, plan.lookup]


# ---------------------------------------------------------------------------
# partitions and paths

@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("a partition needs at least two points")
        if t[0] != 0.0 or t[-1] > 1.0:
            raise ValueError("a partition starts at 0 and ends at t <= 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("partition times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def dyadic(cls, level: int, end: float = 1.0) -> "Partition":
        n = 1 << level
        t = np.arange(n + 1, dtype=float) / n
        return cls(t[t <= end])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)

    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def is_nested_in(self, finer: "Partition") -> bool:
        """True when every time of ``self`` is a time of ``finer``."""
        return bool(np.all(np.isin(self.times, finer.times)))

    def index_in(self, finer: "Partition") -> np.ndarray:
        idx = np.searchsorted(finer.times, self.times)
        idx = np.minimum(idx, len(finer.times) - 1)
        if not np.array_equal(finer.times[idx], self.times):
            raise NotNested("partition is not nested in the finer grid")
        return idx

    def truncate(self, t: float) -> "Partition":
        if t not in self.times:
            raise OffGrid(f"time {t} is not a partition point")
        return Partition(self.times[self.times <= t])

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class BrownianPath:
    seed: int
    grid: Partition
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def _index(self, t: float) -> int:
        i = int(np.searchsorted(self.grid.times, t))
        if i >= len(self.grid.times) or self.grid.times[i] != t:
            raise OffGrid(f"time {t} is not on the path grid")
        return i

    def value(self, t: float) -> np.ndarray:
        return self.values[self._index(t)]

    def value_at(self, t) -> np.ndarray:
        """Canonical value at arbitrary times, on or off the grid."""
        return brownian_values([self.seed], np.atleast_1d(t), self.dim)[0]

    def increment(self, s: float, t: float) -> np.ndarray:
        if s > t:
            raise ValueError("increment needs s <= t")
        return self.values[self._index(t)] - self.values[self._index(s)]

    def refine(self, finer: Partition) -> "BrownianPath":
        if not self.grid.is_nested_in(finer):
            raise NotNested("refine() needs a grid containing the current one")
        return sample_path(self.seed, finer, self.dim)

    def to_bytes(self) -> bytes:
        """Little-endian f64 rows ``(time, v_1..v_d)``."""
        rows = np.column_stack([self.grid.times, self.values]).astype("<f8")
        return rows.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, dim: int, seed: int = 0) -> "BrownianPath":
        rows = np.frombuffer(data, dtype="<f8").reshape(-1, dim + 1)
        return cls(seed, Partition(rows[:, 0].copy()), rows[:, 1:].copy())


def sample_path(seed: int, grid: Partition, d: int) -> BrownianPath:
    values = brownian_values([seed], grid.times, d)[0]
    return BrownianPath(int(seed), grid, values)


def cell_average(times, values, s: float, u: float) -> np.ndarray:
    """Trapezoidal ``(1/(u - s)) * int_s^u f dr`` from samples ``(times[i], values[i])``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not u > s:
        raise ValueError("cell_average needs u > s")
    sel = (times >= s) & (times <= u)
    if sel.sum() < 2 or times[sel][0] != s or times[sel][-1] != u:
        raise InsufficientSamples(f"samples do not cover [{s}, {u}]")
    t, f = times[sel], values[sel]
    w = np.diff(t).reshape((-1,) + (1,) * (f.ndim - 1))
    # integrate deviations from the first sample so constants come back exactly
    dev = f - f[0]
    return f[0] + np.sum(0.5 * (dev[1:] + dev[:-1]) * w, axis=0) / (u - s)
