"""Replica blocks: common-path simulation fanned out to a process pool.

Replica ``r`` always uses ``split_seed(master_seed, r)`` and replicas are
grouped into blocks of fixed size, so every block computes the same numbers
no matter how many workers run them; results are concatenated in replica
order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .coefficients import CoefficientField
from .geometry import Domain
from .paths import Partition, brownian_values, replica_seeds
from .solver import SolutionBatch, integrate

BLOCK_SIZE = 100


@dataclass(frozen=True)
class BlockTask:
    domain: Domain
    field: CoefficientField
    points: np.ndarray           # (P, d) start points, shared by every replica
    level: int                   # solver grid is the dyadic partition of this level
    master_seed: int
    start: int
    count: int
    reducer: Callable[..., Any]
    options: dict = field(default_factory=dict)
    guard: bool = True


@dataclass
class Block:
    """Simulation of one block; rows are ordered (replica, point)."""

    grid: Partition
    seeds: np.ndarray        # (R,)
    B: np.ndarray            # (R, n+1, d)
    solutions: SolutionBatch  # N = R * P rows
    replicas: int
    points: int

    def reshape(self, a: np.ndarray) -> np.ndarray:
        return a.reshape((self.replicas, self.points) + a.shape[1:])


def simulate_block(domain, field, points, level, master_seed, start, count, guard: bool = True) -> Block:
    grid = Partition.dyadic(level)
    seeds = replica_seeds(master_seed, count, start)
    B = brownian_values(seeds, grid.times, domain.dim)
    P = len(points)
    rows_B = np.repeat(B, P, axis=0)
    x0 = np.tile(np.asarray(points, dtype=float), (count, 1))
    sols = integrate(domain, field, grid, rows_B, x0, seeds=np.repeat(seeds, P), guard=guard)
    return Block(grid, seeds, B, sols, count, P)


def _run(task: BlockTask):
    blk = simulate_block(task.domain, task.field, task.points, task.level, task.master_seed,
                         task.start, task.count, task.guard)
    return task.reducer(blk, task.domain, task.field, **task.options)


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get("SDEFLOW_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(workers or 1))


def run_replicas(domain: Domain, field: CoefficientField, points, level: int, master_seed: int,
                 replicas: int, reducer: Callable[..., Any], workers: int | None = 1,
                 block_size: int = BLOCK_SIZE, guard: bool = True, **options) -> list:
    """Apply ``reducer(block, domain, field, **options)`` to every block, in replica order."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tasks = [BlockTask(domain, field, points, level, master_seed, s, min(block_size, replicas - s),
                       reducer, options, guard)
             for s in range(0, replicas, block_size)]
    return map_ordered(_run, tasks, workers)


def map_ordered(func: Callable[[Any], Any], tasks: list, workers: int | None = 1) -> list:
    """``[func(t) for t in tasks]``, optionally on a process pool; order is preserved."""
    n = resolve_workers(workers)
    if n == 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(func, tasks))
