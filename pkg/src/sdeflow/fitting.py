"""Log-log rate fitting with bootstrap confidence intervals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit

BOOTSTRAP_RESAMPLES = 200
CI_LEVEL = 0.95


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple[float, float]

    def __iter__(self):
        yield self.slope
        yield self.intercept
        yield self.ci


def _ols(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Slopes and intercepts of ``v ≈ a + s u`` along the last axis of ``v``."""
    um = u.mean()
    du = u - um
    s = np.sum(du * (v - v.mean(axis=-1, keepdims=True)), axis=-1) / np.sum(du * du)
    return s, v.mean(axis=-1) - s * um


def _logs(abscissa, estimates) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(abscissa, dtype=float)
    e = np.asarray(estimates, dtype=float)
    if a.ndim != 1 or a.shape != e.shape[-1:]:
        raise ValueError("abscissa and estimates must align")
    if len(a) < 3:
        raise ValueError("a rate fit needs at least three points")
    if np.any(a <= 0) or np.any(~(e > 0)):
        raise DegenerateFit("log-log fit needs positive abscissa and estimates")
    return np.log(a), np.log(e)


def fit_rate(abscissa, estimates, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
             level: float = CI_LEVEL) -> RateFit:
    """OLS slope of ``log estimates`` on ``log abscissa`` with a residual-bootstrap CI.

    Residuals are leverage-corrected and the interval is of bootstrap-t type,
    which keeps its nominal coverage with the handful of points a dyadic
    sweep provides.
    """
    u, v = _logs(abscissa, estimates)
    n = len(u)
    s, a = _ols(u, v)
    s, a = float(s), float(a)
    fitted = a + s * u
    resid = v - fitted
    du = u - u.mean()
    sxx = float(np.sum(du * du))
    lev = 1.0 / n + du * du / sxx
    adj = resid / np.sqrt(1.0 - lev)
    adj = adj - adj.mean()
    se = np.sqrt(np.sum(resid**2) / (n - 2) / sxx)
    if se == 0.0:
        return RateFit(s, a, (s, s))
    rng = np.random.default_rng(seed)
    draws = fitted + adj[rng.integers(0, n, size=(resamples, n))]
    bs, ba = _ols(u, draws)
    bres = draws - (ba[:, None] + bs[:, None] * u)
    bse = np.sqrt(np.sum(bres**2, axis=-1) / (n - 2) / sxx)
    tstat = (bs - s) / np.where(bse > 0, bse, np.inf)
    q_lo, q_hi = np.quantile(tstat, [(1 - level) / 2, (1 + level) / 2])
    return RateFit(s, a, (float(s - q_hi * se), float(s - q_lo * se)))


def fit_rate_replicas(abscissa, samples, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
                      level: float = CI_LEVEL) -> tuple[RateFit, np.ndarray, np.ndarray]:
    """Fit on replica means with a CI from resampling replicas.

    ``samples`` has shape ``(replicas, points)``. Returns the fit plus
    percentile intervals for each mean, shape ``(points,)`` each.
    """
    samples = np.asarray(samples, dtype=float)
    est = samples.mean(axis=0)
    u, v = _logs(abscissa, est)
    s, a = _ols(u, v)
    rng = np.random.default_rng(seed)
    R = samples.shape[0]
    boot = np.empty((resamples, samples.shape[1]))
    for i in range(resamples):
        boot[i] = samples[rng.integers(0, R, size=R)].mean(axis=0)
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    mean_lo, mean_hi = np.quantile(boot, [lo_q, hi_q], axis=0)
    ok = np.all(boot > 0, axis=1)
    if not np.any(ok):
        raise DegenerateFit("bootstrap resamples contain zero estimates")
    bs, _ = _ols(u, np.log(boot[ok]))
    ci = tuple(float(q) for q in np.quantile(bs, [lo_q, hi_q]))
    return RateFit(float(s), float(a), ci), mean_lo, mean_hi
