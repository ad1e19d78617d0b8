"""Two-point tail P(W_12 <= ε) ~ K_a ε^(7/2) by hit-or-miss over independent pairs."""

from __future__ import annotations

import logging
import math

import numpy as np

from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.models import CurveKind, SampleMethod, ShapeParam, TailCurve
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample
from oblatus.experiments.fitting import isotonic_in_x, loglog_fit

logger = logging.getLogger("oblatus.experiments.tail")

PAIR_CHUNK = 1_000_000
MIN_HITS = 100
DESK_MIN_PAIRS = 1_000_000


def check_eps_grid(eps_grid) -> np.ndarray:
    eps = np.asarray(eps_grid, dtype=np.float64).ravel()
    if eps.size == 0:
        raise ValueError("invalid eps_grid: empty")
    if np.any(~np.isfinite(eps)) or np.any(eps <= 0.0):
        raise ValueError(f"invalid eps_grid={eps.tolist()}, need eps>0")
    return np.sort(eps)[::-1].copy()


def pair_deficits(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    d = x1 - x2
    return 2.0 - np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])


def _tail_chunk(a: float, method: SampleMethod, m: int, eps: np.ndarray, stream: RngStream) -> np.ndarray:
    shape = ShapeParam(a)
    x1 = sample(method, stream.child(0), m, shape).points
    x2 = sample(method, stream.child(1), m, shape).points
    w = np.sort(pair_deficits(x1, x2))
    return np.searchsorted(w, eps, side="right").astype(np.int64)


def fit_curve(
    kind: CurveKind,
    shape: ShapeParam,
    eps: np.ndarray,
    prob: np.ndarray,
    se: np.ndarray,
    hits: np.ndarray,
    n_pairs: int,
    min_hits: int = MIN_HITS,
    **extra,
) -> TailCurve:
    """Weighted log-log fit over grid points with enough hits; the rest are flagged.

    Overlap curves pass ``joint_hits`` and are screened on those instead of the
    marginal inner hits.
    """
    screen = extra.get("joint_hits")
    screen = hits if screen is None else np.asarray(screen)
    excluded = [float(e) for e, h in zip(eps, screen, strict=True) if h < min_hits]
    if excluded:
        logger.warning("%s grid points excluded for few hits a=%s eps=%s", kind, shape.a, excluded)
    usable = (screen >= min_hits) & (prob > 0.0) & (prob < 1.0) & (se > 0.0)
    slope, intercept = math.nan, math.nan
    if np.count_nonzero(usable) >= 2:
        smooth = isotonic_in_x(eps[usable], prob[usable], weights=1.0 / se[usable] ** 2)
        slope, intercept = loglog_fit(eps[usable], smooth, se[usable])
    else:
        logger.warning("%s fit skipped a=%s usable_points=%s", kind, shape.a, int(np.count_nonzero(usable)))
    return TailCurve(
        kind=kind,
        a=shape.a,
        eps_grid=eps,
        prob_estimates=prob,
        std_errors=se,
        hits=hits,
        n_pairs=int(n_pairs),
        fitted_slope=slope,
        fitted_intercept=intercept,
        excluded=excluded,
        **extra,
    )


def run_tail_experiment(
    shape: ShapeParam,
    eps_grid,
    n_pairs: int,
    stream: RngStream,
    engine: ReplicationEngine | None = None,
    method: SampleMethod = "parameter",
    chunk: int = PAIR_CHUNK,
    min_hits: int = MIN_HITS,
) -> TailCurve:
    shape.require_interior()
    eps = check_eps_grid(eps_grid)
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise ValueError(f"invalid n_pairs={n_pairs}")
    if n_pairs < DESK_MIN_PAIRS:
        logger.warning("tail below desk budget n_pairs=%s", n_pairs)
    sizes = [chunk] * (n_pairs // chunk)
    if n_pairs % chunk:
        sizes.append(n_pairs % chunk)
    tasks = [(shape.a, method, m, eps, stream.child(c)) for c, m in enumerate(sizes)]
    parts = run_ordered(engine, _tail_chunk, tasks, label="tail chunk")
    hits = np.sum(parts, axis=0).astype(np.int64)
    prob = hits / n_pairs
    se = np.sqrt(prob * (1.0 - prob) / n_pairs)
    for e, h, p in zip(eps, hits, prob, strict=True):
        logger.info("tail estimate a=%s eps=%s hits=%s p=%s", shape.a, e, h, p)
    return fit_curve("tail", shape, eps, prob, se, hits, n_pairs, min_hits=min_hits)


def empirical_k(curve: TailCurve, points: int = 2) -> float:
    """Level p(ε)/ε^(7/2) averaged over the smallest usable grid points."""
    usable = [(e, p) for e, p, h in zip(curve.eps_grid, curve.prob_estimates, curve.hits, strict=True)
              if h >= MIN_HITS and 0.0 < p < 1.0]
    if not usable:
        raise ValueError(f"no usable tail points a={curve.a}")
    usable.sort()
    levels = [p / e**3.5 for e, p in usable[:points]]
    return float(np.mean(levels))
