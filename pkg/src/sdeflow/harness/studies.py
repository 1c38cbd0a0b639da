"""Experiment studies: moment bounds, Riemann-sum convergence, substitution.

Every study draws replica ``r`` from ``split_seed(master_seed, r)``. Studies
that share start points and a time grid share one simulation, so all
(x, y) comparisons are on common paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import montecarlo
from ..anticipating import SubstitutionRecord, refined, substitution_study
from ..coefficients import CoefficientField, ConstantField
from ..errors import BadSegment, DegenerateFit
from ..fitting import BOOTSTRAP_RESAMPLES, CI_LEVEL, fit_rate
from ..geometry import Domain
from ..paths import Partition, split_seed
from ..solver import default_eps_boundary
from ..stratonovich import difference_norms, moment_estimate, riemann_partials
from .config import ExperimentConfig

RATIO_BAND = 10.0
DOUBLING_TOLERANCE = 0.10
TEMPORAL_SLACK = 0.2
MAX_GRID_POINTS = 125


@dataclass(frozen=True)
class MomentTable:
    abscissa: np.ndarray
    estimates: np.ndarray
    replicas: int
    p: int
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    slope: float
    slope_ci: tuple[float, float]
    label: str = ""

    def __post_init__(self):
        d = np.diff(self.abscissa)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("abscissa must be strictly monotone")
        if np.any(self.ci_lo > self.estimates) or np.any(self.ci_hi < self.estimates):
            raise ValueError("confidence intervals must bracket the estimates")


@dataclass(frozen=True)
class Assertion:
    id: str
    passed: bool
    detail: str = ""


@dataclass
class StudyResult:
    name: str
    header: list[str]
    rows: list[list]
    assertions: list[Assertion] = field(default_factory=list)
    values: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# statistics helpers

def _bootstrap_means(samples: np.ndarray, seed: int, reduce: Callable | None = None,
                     resamples: int = BOOTSTRAP_RESAMPLES) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Replica-bootstrap percentile interval of ``reduce(mean over replicas)``."""
    reduce = reduce or (lambda m: m)
    est = reduce(samples.mean(axis=0))
    rng = np.random.default_rng(seed)
    R = samples.shape[0]
    boot = np.stack([reduce(samples[rng.integers(0, R, size=R)].mean(axis=0)) for _ in range(resamples)])
    lo, hi = np.quantile(boot, [(1 - CI_LEVEL) / 2, (1 + CI_LEVEL) / 2], axis=0)
    return est, np.minimum(lo, est), np.maximum(hi, est)


def moment_table(abscissa, samples, p: int, seed: int, label: str = "", reduce=None) -> MomentTable:
    """Table from per-replica samples ``(replicas, points[, ...])``; ``reduce`` maps means to estimates."""
    abscissa = np.asarray(abscissa, dtype=float)
    est, lo, hi = _bootstrap_means(np.asarray(samples, dtype=float), seed, reduce)
    try:
        fit = fit_rate(abscissa, est, seed=seed)
        slope, ci = fit.slope, fit.ci
    except DegenerateFit:
        slope, ci = float("nan"), (float("nan"), float("nan"))
    return MomentTable(abscissa, est, int(samples.shape[0]), p, lo, hi, slope, ci, label)


def is_frozen(field: CoefficientField) -> bool:
    """Zero diffusion and zero drift: the flow is the identity."""
    if not isinstance(field, ConstantField) or np.any(field.matrix != 0):
        return False
    probe = np.vstack([np.zeros(field.dim), np.eye(field.dim)])
    return bool(np.all(field.b(probe) == 0))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# context shared by the studies of one run

class Context:
    def __init__(self, cfg: ExperimentConfig, workers: int | None = 1):
        self.cfg = cfg
        self.workers = workers
        self.domain: Domain = cfg.domain()
        self.field: CoefficientField = cfg.field(self.domain.dim)
        self.seed = cfg.master_seed
        self.level = cfg.dt_level
        self.hash = cfg.config_hash()
        self.p = cfg.get_int("moments", "p")
        self.guard = cfg.get_bool("solver", "guard")
        self.boot_seed = split_seed(self.seed, -1) & 0xFFFFFFFF
        self._grid = None
        self._segment = None
        self.frozen = is_frozen(self.field)
        if self.p < 2:
            raise cfg.error("moment order p must be at least 2", "moments", "p")

    def tag(self) -> list:
        return [self.seed, self.hash]

    # x0 grid ---------------------------------------------------------------
    def x0_grid(self) -> np.ndarray:
        n = self.cfg.get_int("stratonovich", "x0_grid")
        w = self.cfg.get_float("stratonovich", "x0_box")
        d = self.domain.dim
        while n > 1 and n**d > MAX_GRID_POINTS:
            n -= 1
        c = self.domain.center
        axes = [np.linspace(c[i] - w, c[i] + w, n) if n > 1 else np.array([c[i]]) for i in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        pts = pts[self.domain.in_closure(pts)]
        if len(pts) == 0:
            raise self.cfg.error("x0 grid has no point in the domain", "stratonovich", "x0_box")
        return pts

    # segment for spatial and two-point studies ----------------------------
    def segment(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.domain.dim
        if self.cfg.has("moments", "direction"):
            e = np.asarray(self.cfg.get_floats("moments", "direction"))
        else:
            e = np.eye(d)[0]
        if len(e) != d or not np.linalg.norm(e) > 0:
            raise self.cfg.error("direction must be a nonzero vector of the domain dimension", "moments", "direction")
        e = e / np.linalg.norm(e)
        if self.cfg.has("moments", "base_point"):
            x = np.asarray(self.cfg.get_floats("moments", "base_point"))
        else:
            x = self.domain.center - 0.15 * self.domain.diameter * e
        if len(x) != d:
            raise self.cfg.error("base_point has the wrong dimension", "moments", "base_point")
        return x, e

    def separations(self, key: str) -> np.ndarray:
        return 2.0 ** -np.asarray(self.cfg.get_range("moments", key), dtype=float)

    # shared simulations ----------------------------------------------------
    def grid_simulation(self, replicas: int) -> dict:
        """Statistics on the x0 grid (temporal, bound, Riemann), cached by replica count."""
        if self._grid is None or self._grid["replicas"] < replicas:
            T = temporal_times(self)
            levels = self.cfg.get_range("stratonovich", "levels")
            parts = montecarlo.run_replicas(self.domain, self.field, self.x0_grid(), self.level, self.seed,
                                            replicas, _grid_reducer, self.workers, guard=self.guard, p=self.p,
                                            s=T[0], ts=tuple(T[1]), levels=tuple(levels))
            self._grid = {"replicas": replicas,
                          **{k: np.concatenate([q[k] for q in parts], axis=0) for k in parts[0]}}
        return {k: (v[:replicas] if isinstance(v, np.ndarray) else v) for k, v in self._grid.items()}

    def grid_replicas(self) -> int:
        """Replicas of the shared x0-grid simulation needed by the selected studies."""
        names = selected(self.cfg)
        need = [0]
        if "temporal_moments" in names:
            need.append(self.cfg.get_int("moments", "replicas"))
        if "bound_moments" in names:
            need.append(max(self.cfg.get_int("moments", "replicas"), _bound_replicas(self)))
        if "riemann_convergence" in names:
            need.append(self.cfg.get_int("stratonovich", "replicas"))
        return max(need)

    def segment_simulation(self, replicas: int) -> tuple[np.ndarray, np.ndarray, dict]:
        if self._segment is None or self._segment[2]["replicas"] < replicas:
            x, e = self.segment()
            seps = np.union1d(self.separations("separations"), self.separations("two_point_separations"))[::-1]
            pts = np.vstack([x, x + seps[:, None] * e])
            if not np.all(self.domain.in_closure(pts)):
                raise BadSegment("the separation segment leaves the closed domain")
            level = self.cfg.get_int("moments", "two_point_level")
            parts = montecarlo.run_replicas(self.domain, self.field, pts, self.level, self.seed, replicas,
                                            _segment_reducer, self.workers, guard=self.guard, p=self.p,
                                            partition_level=min(level, self.level))
            data = {"replicas": replicas,
                    **{k: np.concatenate([q[k] for q in parts], axis=0) for k in parts[0]}}
            self._segment = (seps, pts, data)
        seps, pts, data = self._segment
        return seps, pts, {k: (v[:replicas] if isinstance(v, np.ndarray) else v) for k, v in data.items()}


def temporal_times(ctx: Context) -> tuple[float, list[float]]:
    s = ctx.cfg.get_float("moments", "anchor")
    gaps = 2.0 ** -np.asarray(ctx.cfg.get_range("moments", "gaps"), dtype=float)
    grid = Partition.dyadic(ctx.level)
    ts = [s + g for g in gaps]
    for t in [s] + ts:
        if t > 1.0 or t not in grid.times:
            raise ctx.cfg.error(f"time {t} is not on the dyadic grid of level {ctx.level}", "moments", "gaps")
    return s, ts


# ---------------------------------------------------------------------------
# block reducers (run inside workers)

def _grid_reducer(block: montecarlo.Block, domain: Domain, field: CoefficientField, p=2, s=0.25, ts=(),
                  levels=()):
    sols = block.solutions
    times = block.grid.times
    X = block.reshape(sols.x)
    L = block.reshape(sols.l)
    ks = int(np.searchsorted(times, s))
    kt = np.searchsorted(times, np.asarray(ts))
    dX = np.linalg.norm(X[:, :, kt] - X[:, :, ks:ks + 1], axis=-1) ** (2 * p)
    dL = np.linalg.norm(L[:, :, kt] - L[:, :, ks:ks + 1], axis=-1) ** (2 * p)
    bound = np.stack([np.linalg.norm(X, axis=-1).max(axis=-1) ** p,
                      np.linalg.norm(L, axis=-1).max(axis=-1) ** p,
                      block.reshape(sols.l_tv)[:, :, -1],
                      domain.phi(X).max(axis=-1)], axis=-1)
    return {"temporal": np.stack([dX, dL], axis=-1), "bound": bound,
            "riemann": difference_norms(block, field, levels)}


def _segment_reducer(block: montecarlo.Block, domain: Domain, field: CoefficientField, p=2,
                     partition_level=6):
    sols = block.solutions
    X = block.reshape(sols.x)
    L = block.reshape(sols.l)
    sx = np.linalg.norm(X[:, 1:] - X[:, :1], axis=-1).max(axis=-1) ** p
    sl = np.linalg.norm(L[:, 1:] - L[:, :1], axis=-1).max(axis=-1) ** p
    idx = Partition.dyadic(partition_level).index_in(block.grid)
    B = np.repeat(block.B, block.points, axis=0)
    S = block.reshape(riemann_partials(block.grid.times, field.sigma(sols.x), B, idx))
    gap = np.linalg.norm(S[:, 1:] - S[:, :1], axis=-1).max(axis=-1) ** p
    return {"spatial": np.stack([sx, sl], axis=-1), "two_point": gap}


# ---------------------------------------------------------------------------
# studies

def spatial_moment_study(ctx: Context) -> StudyResult:
    R = ctx.cfg.get_int("moments", "replicas")
    p = ctx.p
    seps, _, data = ctx.segment_simulation(R)
    want = ctx.separations("separations")
    cols = [int(np.nonzero(seps == s)[0][0]) for s in want]
    samples = data["spatial"][:, cols]
    tx = moment_table(want, samples[..., 0], p, ctx.boot_seed, "spatial_x")
    tl = moment_table(want, samples[..., 1], p, ctx.boot_seed, "spatial_l")
    rx = tx.estimates / want**p
    rl = tl.estimates / want**p
    header = ["separation", "moment_x", "moment_l", "ratio_x", "ratio_l", "ci_lo", "ci_hi", "replicas",
              "seed", "config_hash"]
    rows = [[_fmt(want[i]), _fmt(tx.estimates[i]), _fmt(tl.estimates[i]), _fmt(rx[i]), _fmt(rl[i]),
             _fmt(tx.ci_lo[i]), _fmt(tx.ci_hi[i]), R] + ctx.tag() for i in range(len(want))]
    band = float(rx.max() / rx.min()) if rx.min() > 0 else math.inf
    res = StudyResult("spatial_moments", header, rows, tables={"x": tx, "l": tl})
    res.assertions.append(Assertion("spatial.ratio_band", band <= RATIO_BAND,
                                    f"max/min ratio {band:.4g} (limit {RATIO_BAND:g})"))
    if ctx.frozen:
        ok = abs(tx.slope - p) <= 1e-10 and np.allclose(rx, 1.0, rtol=0, atol=1e-9)
        res.assertions.append(Assertion("spatial.frozen_slope", bool(ok), f"slope {tx.slope!r} vs p = {p}"))
    lband = float(rl.max() / rl.min()) if rl.min() > 0 else float("nan")
    res.values.update({"spatial.slope_x": tx.slope, "spatial.slope_x_ci_lo": tx.slope_ci[0],
                       "spatial.slope_x_ci_hi": tx.slope_ci[1], "spatial.ratio_band_x": band,
                       "spatial.slope_l": tl.slope, "spatial.ratio_band_l": lband,
                       "spatial.ratio_max_x": float(rx.max()), "spatial.replicas": R})
    return res


def temporal_moment_study(ctx: Context) -> StudyResult:
    R = ctx.cfg.get_int("moments", "replicas")
    p = ctx.p
    s, ts = temporal_times(ctx)
    gaps = np.asarray(ts) - s
    T = ctx.grid_simulation(ctx.grid_replicas())["temporal"][:R]  # (R, P, G, 2)
    tx = moment_table(gaps, T[..., 0], 2 * p, ctx.boot_seed, "temporal_x", reduce=lambda m: m.max(axis=0))
    tl = moment_table(gaps, T[..., 1], 2 * p, ctx.boot_seed, "temporal_l", reduce=lambda m: m.max(axis=0))
    header = ["gap", "s", "t", "moment_x", "moment_l", "ratio_x", "ratio_l", "ci_lo", "ci_hi", "replicas",
              "seed", "config_hash"]
    expo = p / 2.0
    rows = [[_fmt(gaps[i]), _fmt(s), _fmt(ts[i]), _fmt(tx.estimates[i]), _fmt(tl.estimates[i]),
             _fmt(tx.estimates[i] / gaps[i] ** expo), _fmt(tl.estimates[i] / gaps[i] ** expo),
             _fmt(tx.ci_lo[i]), _fmt(tx.ci_hi[i]), R] + ctx.tag() for i in range(len(gaps))]
    res = StudyResult("temporal_moments", header, rows, tables={"x": tx, "l": tl})
    threshold = expo - TEMPORAL_SLACK
    if np.all(tx.estimates == 0):
        res.assertions.append(Assertion("temporal.slope", ctx.frozen, "all increments vanish"))
    else:
        res.assertions.append(Assertion("temporal.slope", bool(tx.slope >= threshold),
                                        f"slope {tx.slope:.4g} (threshold {threshold:g})"))
    res.values.update({"temporal.slope_x": tx.slope, "temporal.slope_x_ci_lo": tx.slope_ci[0],
                       "temporal.slope_x_ci_hi": tx.slope_ci[1], "temporal.slope_l": tl.slope,
                       "temporal.replicas": R})
    return res


def _bound_replicas(ctx: Context) -> int:
    return ctx.cfg.get_int("moments", "bound_replicas")


def bound_moment_study(ctx: Context) -> StudyResult:
    R = ctx.cfg.get_int("moments", "replicas")
    R2 = max(R, _bound_replicas(ctx))
    p = ctx.p
    pts = ctx.x0_grid()
    Bd = ctx.grid_simulation(ctx.grid_replicas())["bound"][:R2]  # (R2, P, 4)
    half, full = Bd[:R].mean(axis=0), Bd.mean(axis=0)
    header = ["point"] + [f"x0_{i + 1}" for i in range(ctx.domain.dim)] + [
        "moment_x", "moment_l", "ltv_mean", "ltv_mean_doubled", "relative_change", "replicas", "seed",
        "config_hash"]
    rel = np.where(half[:, 2] > 0, np.abs(full[:, 2] / np.where(half[:, 2] > 0, half[:, 2], 1.0) - 1.0), 0.0)
    rows = [[i] + [_fmt(v) for v in pts[i]] + [_fmt(half[i, 0]), _fmt(half[i, 1]), _fmt(half[i, 2]),
                                                  _fmt(full[i, 2]), _fmt(rel[i]), R] + ctx.tag()
            for i in range(len(pts))]
    res = StudyResult("bound_moments", header, rows)
    finite = bool(np.all(np.isfinite(Bd)))
    confined = bool(Bd[..., 3].max() <= ctx.domain.tol_boundary)
    res.assertions.append(Assertion("bound.finite", finite, "all moment estimates finite"))
    res.assertions.append(Assertion("bound.confined", confined, f"max phi(X) = {Bd[..., 3].max():.3g}"))
    res.assertions.append(Assertion("bound.replica_doubling", bool(rel.max() <= DOUBLING_TOLERANCE),
                                    f"max relative change of E|L|_1 {rel.max():.4g} ({R} -> {R2} replicas)"))
    ratio = half[:, 0] / (1.0 + np.linalg.norm(pts, axis=-1)) ** p
    res.values.update({"bound.max_moment_x": float(half[:, 0].max()), "bound.max_moment_l": float(half[:, 1].max()),
                       "bound.max_ratio_x": float(ratio.max()), "bound.max_ltv_change": float(rel.max()),
                       "bound.replicas": R, "bound.replicas_doubled": R2})
    return res


def riemann_convergence_study(ctx: Context) -> StudyResult:
    cfg = ctx.cfg
    R = cfg.get_int("stratonovich", "replicas")
    p = cfg.get_int("stratonovich", "p")
    levels = cfg.get_range("stratonovich", "levels")
    if max(levels) >= ctx.level:
        raise cfg.error("study levels must be coarser than the solver level", "stratonovich", "levels")
    D = ctx.grid_simulation(ctx.grid_replicas())["riemann"][:R]  # (R, P, L)
    powered = D ** (2 * p)
    meshes = 2.0 ** -np.asarray(levels, dtype=float)
    per = [moment_estimate(meshes, powered[:, i], p, ctx.boot_seed, f"x0_{i}") for i in range(D.shape[1])]
    sup = moment_estimate(meshes, powered.max(axis=1), p, ctx.boot_seed, "sup")
    per_max = np.max([m.moments for m in per], axis=0)
    header = ["level", "mesh", "moment_p2", "moment_sup", "ci_lo", "ci_hi", "replicas", "seed", "config_hash"]
    rows = [[levels[j], _fmt(meshes[j]), _fmt(per_max[j]), _fmt(sup.moments[j]), _fmt(sup.ci_lo[j]),
             _fmt(sup.ci_hi[j]), R] + ctx.tag() for j in range(len(levels))]
    res = StudyResult("riemann_convergence", header, rows, tables={"sup": sup, "per_point": per})
    if sup.exact:
        for aid in ("riemann.decreasing", "riemann.sup_decreasing", "riemann.rate_positive"):
            res.assertions.append(Assertion(aid, True, "exact: all moments at machine precision"))
    else:
        dec = all(m.strictly_decreasing for m in per)
        res.assertions.append(Assertion("riemann.decreasing", dec, "per-point moments strictly decreasing"))
        res.assertions.append(Assertion("riemann.sup_decreasing", sup.strictly_decreasing,
                                        "sup-over-grid moments strictly decreasing"))
        lows = [sup.ci[0]] + [m.ci[0] for m in per]
        res.assertions.append(Assertion("riemann.rate_positive", bool(min(lows) > 0),
                                        f"sup rate {sup.fitted_rate:.4g} CI [{sup.ci[0]:.4g}, {sup.ci[1]:.4g}]; "
                                        f"min per-point CI low {min(lows):.4g}"))
    dominates = bool(np.all(sup.moments >= per_max))
    res.assertions.append(Assertion("riemann.sup_dominates", dominates, "sup moments dominate per-point moments"))
    res.values.update({"riemann.rate_sup": sup.fitted_rate, "riemann.rate_sup_ci_lo": sup.ci[0],
                       "riemann.rate_sup_ci_hi": sup.ci[1], "riemann.exact": sup.exact,
                       "riemann.points": D.shape[1], "riemann.replicas": R})
    return res


def two_point_study(ctx: Context) -> StudyResult:
    R = ctx.cfg.get_int("moments", "replicas")
    p = ctx.p
    seps, _, data = ctx.segment_simulation(R)
    want = ctx.separations("two_point_separations")
    cols = [int(np.nonzero(seps == s)[0][0]) for s in want]
    t = moment_table(want, data["two_point"][:, cols], p, ctx.boot_seed, "two_point")
    ratios = t.estimates[1:] / np.where(t.estimates[:-1] > 0, t.estimates[:-1], np.inf)
    lo, hi = 2.0**-p / 2.0, 2.0**-p * 2.0
    header = ["separation", "gap", "ratio_to_previous", "normalized", "ci_lo", "ci_hi", "partition_level",
              "replicas", "seed", "config_hash"]
    level = min(ctx.cfg.get_int("moments", "two_point_level"), ctx.level)
    rows = [[_fmt(want[i]), _fmt(t.estimates[i]), _fmt(ratios[i - 1]) if i else "",
             _fmt(t.estimates[i] / want[i] ** p), _fmt(t.ci_lo[i]), _fmt(t.ci_hi[i]), level, R] + ctx.tag()
            for i in range(len(want))]
    res = StudyResult("two_point", header, rows, tables={"gap": t})
    if np.all(t.estimates == 0):
        res.assertions.append(Assertion("two_point.halving_ratio", True, "exact: all gaps vanish"))
    else:
        ok = bool(np.all((ratios >= lo) & (ratios <= hi)))
        res.assertions.append(Assertion("two_point.halving_ratio", ok,
                                        f"ratios {', '.join(f'{r:.4g}' for r in ratios)} in [{lo:g}, {hi:g}]"))
    res.values.update({"two_point.slope": t.slope, "two_point.replicas": R})
    return res


def substitution_records(ctx: Context) -> tuple[list[tuple[int, int]], list[list[SubstitutionRecord]]]:
    cfg = ctx.cfg
    n = cfg.get_int("anticipating", "x_grid_per_axis")
    L = cfg.get_int("anticipating", "dt_level")
    kind = cfg.raw("anticipating", "kind").strip()
    paths = cfg.get_int("anticipating", "paths")
    checkpoints = cfg.get_floats("anticipating", "checkpoints")
    eps_factor = cfg.get_float("solver", "eps_boundary_factor")
    for t in checkpoints:
        if t not in Partition.dyadic(L).times:
            raise cfg.error(f"checkpoint {t} is not on the level-{L} grid", "anticipating", "checkpoints")
    settings = [(n, L), refined(n, L)]
    out = []
    for per_axis, level in settings:
        eps = default_eps_boundary(ctx.domain, ctx.field, 2.0**-level, eps_factor)
        try:
            out.append(substitution_study(ctx.domain, ctx.field, kind, paths, ctx.seed, per_axis, level,
                                          checkpoints, ctx.workers, eps=eps))
        except ValueError as exc:
            raise cfg.error(str(exc), "anticipating", "kind") from None
    return settings, out


def substitution_experiment(ctx: Context) -> StudyResult:
    settings, runs = substitution_records(ctx)
    d = ctx.domain.dim
    header = ["path_seed", "kind", "t"] + [f"z_{i + 1}" for i in range(d)] + [
        "err_substitution", "nearest_node_flag", "x_grid_per_axis", "dt_level", "err_snapped", "f_mass",
        "seed", "config_hash"]
    rows = []
    means = []
    for (n, L), recs in zip(settings, runs):
        for r in recs:
            rows.append([r.path_seed, r.kind, _fmt(r.t)] + [_fmt(v) for v in r.z]
                        + [_fmt(r.err), int(r.nearest_node_flag), n, L, _fmt(r.err_snapped), _fmt(r.f_mass)]
                        + ctx.tag())
        cps = sorted({r.t for r in recs})
        means.append({t: float(np.mean([r.err for r in recs if r.t == t])) for t in cps}
                     | {"all": float(np.mean([r.err for r in recs]))})
    res = StudyResult("substitution", header, rows)
    coarse, fine = means
    if ctx.frozen or all(v == 0 for v in coarse.values()):
        dec = all(fine[k] <= coarse[k] for k in coarse)
    else:
        dec = all(fine[k] < coarse[k] for k in coarse)
    res.assertions.append(Assertion("substitution.refinement_decreases", dec,
                                    f"mean error {coarse['all']:.4g} -> {fine['all']:.4g}"))
    fmass = max(r.f_mass for recs in runs for r in recs)
    res.assertions.append(Assertion("substitution.local_time_support", fmass == 0.0,
                                    f"max F(t, Z) = {fmass!r}"))
    snap = max(max(r.err_snapped, r.riemann_gap_snapped) for recs in runs for r in recs)
    res.assertions.append(Assertion("substitution.node_snapped", snap < 1e-12, f"max snapped error {snap!r}"))
    flags = np.mean([r.nearest_node_flag for recs in runs for r in recs])
    res.values.update({"substitution.mean_err_coarse": coarse["all"], "substitution.mean_err_fine": fine["all"],
                       "substitution.nearest_node_fraction": float(flags),
                       "substitution.max_snapped_err": snap})
    for t in coarse:
        if t != "all":
            res.values[f"substitution.mean_err_coarse.t{t:g}"] = coarse[t]
            res.values[f"substitution.mean_err_fine.t{t:g}"] = fine[t]
    return res


STUDIES = {
    "spatial_moments": spatial_moment_study,
    "temporal_moments": temporal_moment_study,
    "bound_moments": bound_moment_study,
    "riemann_convergence": riemann_convergence_study,
    "two_point": two_point_study,
    "substitution": substitution_experiment,
}


def selected(cfg: ExperimentConfig) -> list[str]:
    name = cfg.experiment
    return list(STUDIES) if name == "full" else [name]
