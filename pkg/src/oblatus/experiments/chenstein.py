"""Chen-Stein dependency-graph terms b1 ≈ n³ p(ε_n)² and b2 ≈ n³ q(ε_n), ε_n = t n^(-4/7)."""

from __future__ import annotations

import logging

import numpy as np

from oblatus.core.diameter import INTERIOR_EXPONENT
from oblatus.core.models import ChenSteinRecord, ShapeParam, TailCurve
from oblatus.experiments.fitting import loglog_interpolate, spread

logger = logging.getLogger("oblatus.experiments.chenstein")


def _measured(curve: TailCurve) -> tuple[np.ndarray, np.ndarray]:
    keep = (curve.prob_estimates > 0.0) & np.isin(curve.eps_grid, curve.excluded, invert=True)
    return curve.eps_grid[keep], curve.prob_estimates[keep]


def covered_n_range(t: float, tail: TailCurve, overlap: TailCurve) -> tuple[float, float]:
    """n interval for which ε_n lies inside both measured ε ranges."""
    if t <= 0.0:
        raise ValueError(f"invalid t={t}, need t>0")
    e1, _ = _measured(tail)
    e2, _ = _measured(overlap)
    if e1.size < 2 or e2.size < 2:
        raise ValueError("curves need at least 2 measured points each")
    lo = max(e1.min(), e2.min())
    hi = min(e1.max(), e2.max())
    if lo > hi:
        raise ValueError(f"tail and overlap ranges do not overlap lo={lo} hi={hi}")
    power = 1.0 / INTERIOR_EXPONENT
    return float((t / hi) ** power), float((t / lo) ** power)


def chen_stein_diagnostic(
    shape: ShapeParam, n_grid, t: float, tail: TailCurve, overlap: TailCurve
) -> ChenSteinRecord:
    if t <= 0.0:
        raise ValueError(f"invalid t={t}, need t>0")
    if tail.kind != "tail" or overlap.kind != "overlap":
        raise ValueError(f"curve kinds mismatch tail={tail.kind} overlap={overlap.kind}")
    n = np.asarray(n_grid, dtype=np.float64).ravel()
    if n.size == 0 or np.any(n < 2):
        raise ValueError(f"invalid n_grid={n.tolist()}")
    eps_n = t * n ** (-INTERIOR_EXPONENT)
    p = np.asarray(loglog_interpolate(*_measured(tail), eps_n), dtype=np.float64)
    q = np.asarray(loglog_interpolate(*_measured(overlap), eps_n), dtype=np.float64)
    b1 = n**3 * p * p
    b2 = n**3 * q
    b1_scaled = b1 * n
    b2_scaled = b2 * n ** (1.0 / 7.0)
    record = ChenSteinRecord(
        a=shape.a,
        t=float(t),
        n_grid=n,
        eps_n=eps_n,
        b1=b1,
        b2=b2,
        b1_scaled=b1_scaled,
        b2_scaled=b2_scaled,
        b1_spread=spread(b1_scaled),
        b2_spread=spread(b2_scaled),
    )
    logger.info("chen-stein a=%s t=%s b1_spread=%s b2_spread=%s", shape.a, t, record.b1_spread, record.b2_spread)
    return record
