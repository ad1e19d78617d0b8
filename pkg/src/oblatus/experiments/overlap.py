"""Overlap probability q(ε) = P(W_12 <= ε, W_13 <= ε) = E[p_ε(X_1)²].

Nested estimator: for every outer point X_1, p_ε(X_1) is estimated from
``n_inner`` fresh points and squared with the binomial bias correction
p̂² − p̂(1 − p̂)/m. Each outer point owns substream ``stream.child(i)``
(child 0 draws X_1, child 1 the inner sample), so skipping the inner loop
for an unreachable X_1 leaves every other draw unchanged.
"""

from __future__ import annotations

import logging

import numpy as np

from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.geometry import radial_defects, sweep_bound_sq
from oblatus.core.models import SampleMethod, ShapeParam, TailCurve
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample
from oblatus.experiments.tail import MIN_HITS, check_eps_grid, fit_curve

logger = logging.getLogger("oblatus.experiments.overlap")

OUTER_BLOCK = 64
DESK_MIN_INNER = 10_000


def _overlap_block(
    a: float, method: SampleMethod, eps: np.ndarray, n_inner: int, streams: list[RngStream]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    shape = ShapeParam(a)
    floor = (2.0 - float(eps.max())) ** 2 if eps.max() < 2.0 else 0.0
    corrected = np.zeros((len(streams), eps.size))
    inner_hits = np.zeros((len(streams), eps.size), dtype=np.int64)
    joint_hits = np.zeros(eps.size, dtype=np.int64)
    skipped = 0
    clipped = 0
    for i, s in enumerate(streams):
        x1 = sample(method, s.child(0), 1, shape).points[0]
        if sweep_bound_sq(float(radial_defects(x1)), 0.0, shape) < floor:
            skipped += 1
            continue
        inner = sample(method, s.child(1), n_inner, shape).points
        d = inner - x1
        w = np.sort(2.0 - np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]))
        k = np.searchsorted(w, eps, side="right")
        p_hat = k / n_inner
        c = p_hat * p_hat - p_hat * (1.0 - p_hat) / n_inner
        neg = c < 0.0
        clipped += int(np.count_nonzero(neg))
        corrected[i] = np.where(neg, 0.0, c)
        inner_hits[i] = k
        joint_hits += k * (k - 1)
    return corrected, inner_hits, joint_hits, skipped, clipped


def run_overlap_experiment(
    shape: ShapeParam,
    eps_grid,
    n_outer: int,
    n_inner: int,
    stream: RngStream,
    engine: ReplicationEngine | None = None,
    method: SampleMethod = "parameter",
    block: int = OUTER_BLOCK,
    min_hits: int = MIN_HITS,
) -> TailCurve:
    shape.require_interior()
    eps = check_eps_grid(eps_grid)
    n_outer, n_inner = int(n_outer), int(n_inner)
    if n_outer < 2:
        raise ValueError(f"invalid n_outer={n_outer}, need >=2")
    if n_inner < 1:
        raise ValueError(f"invalid n_inner={n_inner}")
    if n_inner < DESK_MIN_INNER:
        logger.warning("overlap below desk budget n_inner=%s", n_inner)
    tasks = [
        (shape.a, method, eps, n_inner, [stream.child(i) for i in range(lo, min(lo + block, n_outer))])
        for lo in range(0, n_outer, block)
    ]
    parts = run_ordered(engine, _overlap_block, tasks, label="overlap block")
    corrected = np.concatenate([p[0] for p in parts])
    inner_hits = np.concatenate([p[1] for p in parts])
    joint_hits = np.sum([p[2] for p in parts], axis=0)
    skipped = sum(p[3] for p in parts)
    clipped = sum(p[4] for p in parts)
    if clipped:
        logger.warning("overlap bias-corrected values clipped a=%s clipped=%s", shape.a, clipped)
    q = corrected.mean(axis=0)
    se = corrected.std(axis=0, ddof=1) / np.sqrt(n_outer)
    hits = inner_hits.sum(axis=0)
    logger.info(
        "overlap done a=%s n_outer=%s n_inner=%s skipped_outer=%s q=%s", shape.a, n_outer, n_inner, skipped, q.tolist()
    )
    return fit_curve(
        "overlap", shape, eps, q, se, hits, n_outer * n_inner, min_hits=min_hits,
        clipped=clipped, n_outer=n_outer, n_inner=n_inner, joint_hits=joint_hits,
    )
