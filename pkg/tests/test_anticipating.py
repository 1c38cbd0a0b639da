from __future__ import annotations

import numpy as np
import pytest

from sdeflow.anticipating import (
    AnticipatingInitial,
    InitialKind,
    adjacent_sup_gap,
    axis_grid,
    bump,
    check_support,
    draw_initial,
    flow_solve,
    interior_bump,
    local_time_functionals,
    refined,
    riemann_substitution_gap,
    substitute,
    substitute_flagged,
    substitution_error,
    substitution_study,
)
from sdeflow.coefficients import ConstantField, LinearDrift, make_field
from sdeflow.errors import OutOfHull, SupportViolation
from sdeflow.geometry import Interval1D, UnitBall
from sdeflow.paths import BrownianPath, Partition, replica_seeds, sample_path
from sdeflow.solver import default_eps_boundary, solve


def canonical():
    return UnitBall(2), make_field("trigonometric", 2, LinearDrift.scaled_identity(2, -0.5))


def frozen(d):
    return ConstantField(np.zeros((d, d)))


def path_ending_at(end) -> BrownianPath:
    g = Partition.dyadic(2)
    vals = np.outer(g.times, np.asarray(end, dtype=float))
    return BrownianPath(0, g, vals)


# --- draw_initial ------------------------------------------------------------------

def test_draw_initial_examples():
    ball = UnitBall(2)
    p = path_ending_at([2.0, 0.0])
    np.testing.assert_array_equal(draw_initial(AnticipatingInitial("fixed_point", (0.1, 0.2)), p, ball), [0.1, 0.2])
    np.testing.assert_array_equal(draw_initial("projected_endpoint", path_ending_at([0.3, -0.4]), ball), [0.3, -0.4])
    np.testing.assert_array_equal(draw_initial("projected_endpoint", p, ball), [1.0, 0.0])
    # the straight path's trapezoidal time average is its midpoint, its running max the endpoint
    np.testing.assert_allclose(draw_initial("projected_mean", p, ball), [1.0, 0.0])
    np.testing.assert_array_equal(draw_initial(InitialKind.PROJECTED_MAX, path_ending_at([0.5, -0.5]), ball),
                                  [0.5, 0.0])


def test_draw_initial_always_in_closure():
    ball = UnitBall(2)
    for s in replica_seeds(3, 200):
        p = sample_path(int(s), Partition.dyadic(6), 2)
        for kind in ("projected_endpoint", "projected_mean", "projected_max"):
            assert ball.in_closure(draw_initial(kind, p, ball))


def test_fixed_point_needs_x0_and_full_path():
    with pytest.raises(ValueError):
        AnticipatingInitial("fixed_point")
    short = sample_path(1, Partition.dyadic(3, end=0.5), 2)
    with pytest.raises(ValueError):
        draw_initial("projected_endpoint", short, UnitBall(2))


# --- flows -------------------------------------------------------------------------

def test_frozen_flow_is_constant():
    p = sample_path(2, Partition.dyadic(6), 2)
    fam = flow_solve(UnitBall(2), frozen(2), p, axis_grid(UnitBall(2), 5))
    assert len(fam.nodes) == 13
    np.testing.assert_array_equal(fam.solutions.x, np.broadcast_to(fam.nodes[:, None, :], fam.solutions.x.shape))


def test_single_point_family_is_a_solve():
    dom, f = canonical()
    p = sample_path(4, Partition.dyadic(8), 2)
    fam = flow_solve(dom, f, p, np.array([[0.3, -0.1]]))
    assert fam.solution(0).x.tobytes() == solve(dom, f, p, [0.3, -0.1]).x.tobytes()


def test_flow_rows_share_the_path():
    dom, f = canonical()
    p = sample_path(4, Partition.dyadic(8), 2)
    fam = flow_solve(dom, f, p, axis_grid(dom, 5))
    for k in (0, 5, 12):
        assert fam.solution(k).x.tobytes() == solve(dom, f, p, fam.nodes[k]).x.tobytes()


def test_two_nearby_points_fixture():
    # regression value tabulated once: seed 31, dyadic level 10, separation 1/64
    dom, f = canonical()
    p = sample_path(31, Partition.dyadic(10), 2)
    fam = flow_solve(dom, f, p, np.array([[0.2, 0.1], [0.2 + 1 / 64, 0.1]]))
    gap = np.linalg.norm(fam.solutions.x[0] - fam.solutions.x[1], axis=-1).max()
    assert gap == pytest.approx(0.01704059445049111, abs=1e-12)


# --- substitute --------------------------------------------------------------------

def test_substitute_reproduces_nodes():
    dom, f = canonical()
    p = sample_path(5, Partition.dyadic(8), 2)
    fam = flow_solve(dom, f, p, axis_grid(dom, 9))
    for k in (0, 20, len(fam.nodes) - 1):
        for t in (0.25, 1.0):
            val, flag = substitute_flagged(fam, fam.nodes[k], t)
            assert not flag
            np.testing.assert_array_equal(val, fam.solutions.x[k, fam.time_index(t)])


def test_substitute_frozen_flow_is_identity():
    dom = UnitBall(2)
    p = sample_path(5, Partition.dyadic(5), 2)
    fam = flow_solve(dom, frozen(2), p, axis_grid(dom, 9))
    rng = np.random.default_rng(0)
    for z in dom.sample_uniform(rng, 200):
        val, flag = substitute_flagged(fam, z, 1.0)
        if flag:
            np.testing.assert_array_equal(val, fam.nodes[fam.nearest_node(z)])
        else:
            np.testing.assert_allclose(val, z, rtol=0, atol=1e-15)


def test_substitute_linear_flow_is_exact():
    # interior-only window: Euler with constant sigma and linear drift is affine in the start point
    dom = Interval1D(-10.0, 10.0)
    f = ConstantField(np.array([[0.1]]), LinearDrift(np.array([[-0.5]]), np.array([0.2])))
    p = sample_path(8, Partition.dyadic(8), 1)
    fam = flow_solve(dom, f, p, (np.linspace(-1.0, 1.0, 5),))
    for z in (-0.83, 0.0, 0.37):
        direct = solve(dom, f, p, [z])
        assert not direct.boundary_flags.any()
        for t in (0.25, 0.5, 1.0):
            np.testing.assert_allclose(substitute(fam, [z], t), direct.at(t), rtol=0, atol=1e-13)


def test_substitute_out_of_hull():
    dom, f = canonical()
    p = sample_path(5, Partition.dyadic(5), 2)
    fam = flow_solve(dom, f, p, (np.linspace(-0.5, 0.5, 3), np.linspace(-0.5, 0.5, 3)))
    with pytest.raises(OutOfHull):
        substitute(fam, [0.7, 0.0], 1.0)


# --- substitution_error ------------------------------------------------------------

def test_fixed_point_on_node_has_zero_error():
    dom, f = canonical()
    p = sample_path(6, Partition.dyadic(8), 2)
    node = axis_grid(dom, 9)[0][3], axis_grid(dom, 9)[1][5]
    kind = AnticipatingInitial("fixed_point", node)
    for t in (0.25, 1.0):
        assert substitution_error(dom, f, p, kind, t, 9, 8) < 1e-12


def test_frozen_dynamics_substitution_error():
    # frozen flow: interpolated cells reproduce Z up to rounding; a Z whose cell has a corner
    # outside the closure takes the flagged nearest-node fallback and is off by |node - Z|
    dom = UnitBall(2)
    seen = set()
    for s in replica_seeds(6, 40):
        p = sample_path(int(s), Partition.dyadic(6), 2)
        for kind in ("projected_mean", "projected_endpoint"):
            z = draw_initial(kind, p, dom)
            fam = flow_solve(dom, frozen(2), p, axis_grid(dom, 9))
            _, flag = substitute_flagged(fam, z, 1.0)
            err = substitution_error(dom, frozen(2), p, kind, 1.0, 9, 6)
            if flag:
                assert err == pytest.approx(np.linalg.norm(fam.nodes[fam.nearest_node(z)] - z), abs=1e-15)
            else:
                assert err <= 1e-15
            seen.add(flag)
    assert seen == {True, False}
    fixed = AnticipatingInitial("fixed_point", (0.1, 0.3))
    assert substitution_error(dom, frozen(2), sample_path(6, Partition.dyadic(6), 2), fixed, 1.0, 9, 6) <= 1e-15


# --- local-time functionals --------------------------------------------------------

def test_local_time_functionals():
    dom, f = canonical()
    p = sample_path(9, Partition.dyadic(10), 2)
    s = solve(dom, f, p, [0.8, 0.0])
    assert s.l_tv[-1] > 0
    eps = default_eps_boundary(dom, f, p.grid.mesh())
    F, G = local_time_functionals(s, interior_bump(dom, eps), dom, eps)
    assert G.tobytes() == s.l.tobytes()
    np.testing.assert_array_equal(F, 0.0)
    F0, _ = local_time_functionals(s, lambda x: np.zeros(x.shape[:-1]))
    np.testing.assert_array_equal(F0, 0.0)
    F1, _ = local_time_functionals(s, lambda x: np.ones(x.shape[:-1]))
    np.testing.assert_allclose(F1, s.l_tv, rtol=0, atol=1e-13)


def test_support_violation():
    dom, f = canonical()
    p = sample_path(9, Partition.dyadic(6), 2)
    s = solve(dom, f, p, [0.8, 0.0])
    with pytest.raises(SupportViolation):
        local_time_functionals(s, bump([0.0, 0.0], 1.0), dom, 0.05)
    check_support(bump([0.0, 0.0], 0.9), dom, 0.05)
    with pytest.raises(SupportViolation):
        interior_bump(dom, 0.6)


def test_continuity_surrogate_decreases_with_spacing():
    dom, f = canonical()
    p = sample_path(int(replica_seeds(42, 1)[0]), Partition.dyadic(9), 2)
    tv_gaps, l_gaps = [], []
    for n in (5, 9, 17):
        fam = flow_solve(dom, f, p, axis_grid(dom, n))
        F = np.stack([local_time_functionals(fam.solution(k), lambda x: np.ones(x.shape[:-1]))[0]
                      for k in range(len(fam.nodes))])
        tv_gaps.append(adjacent_sup_gap(fam, F))
        l_gaps.append(adjacent_sup_gap(fam, fam.solutions.l))
    assert tv_gaps[0] > tv_gaps[1] > tv_gaps[2]
    assert l_gaps[0] > l_gaps[1] > l_gaps[2]


def test_riemann_substitution_gap_on_node():
    dom, f = canonical()
    p = sample_path(3, Partition.dyadic(8), 2)
    fam = flow_solve(dom, f, p, axis_grid(dom, 5))
    assert riemann_substitution_gap(fam, f, fam.nodes[4], Partition.dyadic(5), 0.5) == 0.0
    assert riemann_substitution_gap(fam, f, fam.nodes[4] + 0.01, Partition.dyadic(5), 0.5) > 0.0


# --- study -------------------------------------------------------------------------

def test_substitution_study_refinement():
    dom, f = canonical()
    n1, l1 = 5, 7
    n2, l2 = refined(n1, l1)
    assert (n2, l2) == (9, 8)
    coarse = substitution_study(dom, f, "projected_endpoint", 20, 42, n1, l1)
    fine = substitution_study(dom, f, "projected_endpoint", 20, 42, n2, l2)
    assert len(coarse) == 80
    for t in (0.25, 0.5, 0.75, 1.0):
        a = np.mean([r.err for r in coarse if r.t == t])
        b = np.mean([r.err for r in fine if r.t == t])
        assert b < a
    assert all(r.f_mass == 0.0 and r.err_snapped < 1e-12 and r.riemann_gap_snapped == 0.0 for r in fine)
    assert [r.path_seed for r in coarse[::4]] == [int(s) for s in replica_seeds(42, 20)]
