from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from sdeflow.errors import InsufficientSamples, NotNested, OffGrid
from sdeflow.paths import (
    BrownianPath,
    Partition,
    brownian_values,
    cell_average,
    replica_seeds,
    sample_path,
    split_seed,
)

SEEDS = replica_seeds(12345, 10_000)


# --- partitions --------------------------------------------------------------------

def test_partition_validation():
    with pytest.raises(ValueError):
        Partition([0.0])
    with pytest.raises(ValueError):
        Partition([0.1, 0.5])
    with pytest.raises(ValueError):
        Partition([0.0, 0.5, 0.5])
    p = Partition.dyadic(3)
    assert len(p) == 9 and p.mesh() == 0.125 and p.end == 1.0
    assert Partition.dyadic(2).is_nested_in(p)
    assert not Partition([0.0, 0.3, 1.0]).is_nested_in(p)


# --- sample_path -------------------------------------------------------------------

def test_sample_path_deterministic():
    g = Partition.dyadic(6)
    a, b = sample_path(7, g, 2), sample_path(7, g, 2)
    assert a.values.tobytes() == b.values.tobytes()
    np.testing.assert_array_equal(a.values[0], [0.0, 0.0])
    assert sample_path(8, g, 2).values.tobytes() != a.values.tobytes()


def test_endpoint_is_standard_normal():
    v = brownian_values(SEEDS, [0.0, 1.0], 1)[:, 1, 0]
    assert abs(v.mean()) < 0.05
    assert 0.94 <= v.var() <= 1.06


def test_coordinates_uncorrelated():
    v = brownian_values(SEEDS, [0.0, 1.0], 2)[:, 1, :]
    rho = np.corrcoef(v[:, 0], v[:, 1])[0, 1]
    assert abs(rho) < 0.05


def test_disjoint_increments_independent_gaussian():
    g = Partition.dyadic(3)
    v = brownian_values(SEEDS, g.times, 1)[..., 0]
    inc = np.diff(v, axis=1) / np.sqrt(g.mesh())
    # fixed seed set: KS on the normalized increments of one cell and on all cells
    assert stats.kstest(inc[:, 3], "norm").pvalue > 0.01
    assert stats.kstest(inc.ravel()[:10_000], "norm").pvalue > 0.01
    c = np.corrcoef(inc.T)
    assert np.max(np.abs(c - np.eye(len(c)))) < 0.05


def test_values_do_not_depend_on_grid():
    coarse = Partition.dyadic(2)
    fine = Partition([0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 0.9, 1.0])
    a = sample_path(3, coarse, 2)
    b = sample_path(3, fine, 2)
    idx = coarse.index_in(fine)
    assert a.values.tobytes() == b.values[idx].tobytes()


# --- refine ------------------------------------------------------------------------

def test_refine_noop_and_preserves_values():
    g = Partition.dyadic(4)
    p = sample_path(11, g, 1)
    q = p.refine(g)
    assert q.values.tobytes() == p.values.tobytes()
    r = p.refine(Partition.dyadic(8))
    assert r.values[g.index_in(r.grid)].tobytes() == p.values.tobytes()


def test_refine_twice_equals_once():
    g0, g1, g2 = Partition.dyadic(2), Partition.dyadic(5), Partition.dyadic(9)
    p = sample_path(5, g0, 2)
    assert p.refine(g1).refine(g2).values.tobytes() == p.refine(g2).values.tobytes()


def test_refine_rejects_non_nested():
    p = sample_path(5, Partition.dyadic(3), 1)
    with pytest.raises(NotNested):
        p.refine(Partition([0.0, 0.3, 1.0]))


def test_midpoint_follows_bridge_law():
    v = brownian_values(SEEDS, [0.0, 0.25, 0.375, 0.5], 1)[..., 0]
    bs, bm, bu = v[:, 1], v[:, 2], v[:, 3]
    dev = bm - 0.5 * (bs + bu)
    # bridge on [0.25, 0.5]: conditional mean is the average, conditional variance (u - s)/4
    assert abs(dev.mean()) < 3 * np.sqrt(0.0625 / len(dev))
    assert dev.var() == pytest.approx(0.0625, rel=0.06)
    assert abs(np.corrcoef(dev, bu - bs)[0, 1]) < 0.05


# --- increment ---------------------------------------------------------------------

def test_increment_examples():
    g = Partition.dyadic(4)
    p = sample_path(9, g, 2)
    np.testing.assert_array_equal(p.increment(0.5, 0.5), [0.0, 0.0])
    np.testing.assert_array_equal(p.increment(0.0, 1.0), p.value(1.0))
    total = sum(p.increment(a, b) for a, b in zip(g.times[:-1], g.times[1:]))
    np.testing.assert_allclose(total, p.value(1.0) - p.value(0.0), atol=1e-14)
    with pytest.raises(OffGrid):
        p.increment(0.0, 0.3)


def test_binary_roundtrip():
    p = sample_path(9, Partition.dyadic(4), 2)
    q = BrownianPath.from_bytes(p.to_bytes(), 2, seed=9)
    assert q.values.tobytes() == p.values.tobytes()
    assert q.grid == p.grid


# --- cell_average ------------------------------------------------------------------

def test_cell_average_examples():
    t = np.linspace(0, 1, 101)
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(cell_average(t, np.broadcast_to(M, (101, 2, 2)), 0.0, 1.0), M)
    assert cell_average(t, t, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert abs(cell_average(t, t**2, 0.0, 1.0) - 1 / 3) < 1e-4
    assert cell_average(t, t**2, 0.0, 1.0) == pytest.approx(1 / 3 + 1e-4 / 6, abs=1e-12)


def test_cell_average_needs_coverage():
    t = np.linspace(0, 1, 11)
    with pytest.raises(InsufficientSamples):
        cell_average(t, t, 0.05, 0.5)
    with pytest.raises(ValueError):
        cell_average(t, t, 0.5, 0.5)


# --- seed splitting ----------------------------------------------------------------

def test_split_seed_distinct_and_stable():
    s = [split_seed(42, r) for r in range(1000)]
    assert len(set(s)) == 1000
    assert split_seed(42, 3) == split_seed(42, 3)
    np.testing.assert_array_equal(replica_seeds(42, 5, start=2), [split_seed(42, r) for r in range(2, 7)])
