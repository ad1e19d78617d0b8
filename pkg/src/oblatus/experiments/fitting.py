"""Curve fitting shared by the experiments: log-log slopes, isotonic
smoothing, goodness of fit against the Weibull limit, interpolation."""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, stats

from oblatus.core.constants import weibull_distribution
from oblatus.core.models import LimitLaw

# grid endpoints recomputed through n = (t/ε)^(7/4) may land an ulp outside
RANGE_RTOL = 1e-9


def loglog_fit(x, y, std_errors=None) -> tuple[float, float]:
    """Least-squares (slope, intercept) of log y against log x.

    With ``std_errors`` each point is weighted by y/σ, the inverse standard
    error of log y to first order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError(f"need at least 2 points for a slope, got {x.size}")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("log-log fit needs positive x and y")
    w = None
    if std_errors is not None:
        se = np.asarray(std_errors, dtype=np.float64)
        if np.any(se <= 0.0):
            raise ValueError("log-log fit needs positive std errors")
        w = y / se
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1, w=w)
    return float(slope), float(intercept)


def isotonic_in_x(x, y, weights=None) -> np.ndarray:
    """y smoothed to be nondecreasing in x; returned in the input order."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)[order]
    res = optimize.isotonic_regression(y[order], weights=w, increasing=True)
    out = np.empty_like(y)
    out[order] = res.x
    return out


def ks_against_law(samples, law: LimitLaw) -> tuple[float, float]:
    """Two-sided KS (statistic, p-value) against P(Z <= t) = 1 − exp(−Λ t^(7/2))."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("KS test needs samples")
    res = stats.kstest(samples, weibull_distribution(law).cdf)
    return float(res.statistic), float(res.pvalue)


def loglog_interpolate(x_grid, y_grid, x) -> np.ndarray | float:
    """Piecewise-linear interpolation in (log x, log y); refuses to extrapolate."""
    xg = np.asarray(x_grid, dtype=np.float64)
    yg = np.asarray(y_grid, dtype=np.float64)
    keep = (xg > 0.0) & (yg > 0.0)
    xg, yg = xg[keep], yg[keep]
    if xg.size < 2:
        raise ValueError("interpolation needs at least 2 positive grid points")
    order = np.argsort(xg)
    xg, yg = xg[order], yg[order]
    xq = np.asarray(x, dtype=np.float64)
    lo, hi = float(xg[0]), float(xg[-1])
    if np.any(xq < lo * (1.0 - RANGE_RTOL)) or np.any(xq > hi * (1.0 + RANGE_RTOL)):
        raise ValueError(f"refusing to extrapolate x={x} outside measured range [{lo}, {hi}]")
    xq = np.clip(xq, lo, hi)
    out = np.exp(np.interp(np.log(xq), np.log(xg), np.log(yg)))
    return float(out) if out.ndim == 0 else out


def spread(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or np.any(v <= 0.0):
        return math.inf
    return float(v.max() / v.min())
