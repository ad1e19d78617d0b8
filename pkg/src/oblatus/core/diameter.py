"""Exact sample diameter M_n and near-diametral pair counts N_n(t).

The pruned sweep sorts points by a key (radial defect δ for a < 1, negative
Euclidean norm for the ball) such that the squared-distance bound of a pair
is a nonincreasing function h of the key sum. Point k is compared only with
earlier points j whose key keeps h(K_j + K_k) above the current target, and
the sweep stops as soon as even the smallest key cannot reach it.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from oblatus.core.geometry import contains_many, pair_upper_bound, radial_defects, sq_distances
from oblatus.core.models import DiameterResult, NearDiametralCount, PairDeficit, Point3, ShapeParam

logger = logging.getLogger("oblatus.diameter")

SWEEP_SLACK = 1e-12
INTERIOR_EXPONENT = 4.0 / 7.0


@dataclass(frozen=True)
class SkippedPair:
    pair: tuple[int, int]
    bound: float
    best: float


class _DefectKey:
    """K = δ, h(σ) = 4 − 2(1−a²)σ."""

    def __init__(self, shape: ShapeParam) -> None:
        if shape.a >= 1.0:
            raise ValueError(f"defect sweep needs a<1, got a={shape.a}")
        self.shape = shape
        self._slope = 2.0 * (1.0 - shape.a * shape.a)

    def values(self, pts: np.ndarray) -> np.ndarray:
        return radial_defects(pts)

    def sum_limit(self, target_d2: float) -> float:
        return (4.0 - target_d2) / self._slope

    def exact_bound(self, kj: float, kk: float) -> float:
        return pair_upper_bound(kj, kk, self.shape)


class _NormKey:
    """K = −‖x‖, h(σ) = σ² for σ <= 0 (triangle inequality)."""

    def values(self, pts: np.ndarray) -> np.ndarray:
        return -np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2 + pts[:, 2] ** 2)

    def sum_limit(self, target_d2: float) -> float:
        return -math.sqrt(max(target_d2, 0.0))

    def exact_bound(self, kj: float, kk: float) -> float:
        return -(kj + kk)


def as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
    elif isinstance(points, Sequence) and points and isinstance(points[0], Point3):
        pts = np.array([p.as_array() for p in points], dtype=np.float64)
    else:
        pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    return pts


def _require_pairs(pts: np.ndarray) -> int:
    n = int(pts.shape[0])
    if n < 2:
        raise ValueError(f"need at least 2 points, got n={n}")
    return n


def rescale(deficit: float | np.ndarray, n: int, exponent: float = INTERIOR_EXPONENT):
    return n**exponent * deficit


def diameter_bruteforce(points) -> DiameterResult:
    pts = as_points(points)
    n = _require_pairs(pts)
    best_d2 = -1.0
    best_pair = (0, 1)
    for i in range(n - 1):
        d2 = sq_distances(pts[i + 1 :], pts[i])
        j = int(np.argmax(d2))
        if d2[j] > best_d2:
            best_d2 = float(d2[j])
            best_pair = (i, i + 1 + j)
    return DiameterResult(m_n=math.sqrt(best_d2), pair=best_pair, pairs_examined=n * (n - 1) // 2, n=n)


def _sweep(
    pts: np.ndarray,
    key,
    floor_d2: Optional[float] = None,
    trace: Optional[list[SkippedPair]] = None,
) -> tuple[DiameterResult, list[tuple[int, int]], np.ndarray]:
    n = _require_pairs(pts)
    order = np.argsort(key.values(pts), kind="stable")
    P = pts[order]
    K = key.values(P)

    best_d2 = -math.inf
    best_pair: Optional[tuple[int, int]] = None
    examined = 0
    near_pairs: list[tuple[int, int]] = []
    near_d2: list[float] = []

    def _orig(j: int, k: int) -> tuple[int, int]:
        oj, ok = int(order[j]), int(order[k])
        return (oj, ok) if oj < ok else (ok, oj)

    def _skip(js, k: int, target: float) -> None:
        best = math.sqrt(max(target, 0.0))
        for j in js:
            trace.append(SkippedPair(_orig(j, k), key.exact_bound(float(K[j]), float(K[k])), best))

    for k in range(1, n):
        if best_pair is None:
            limit = k
        else:
            target = best_d2 if floor_d2 is None else min(best_d2, floor_d2)
            lim_sum = key.sum_limit(target - SWEEP_SLACK)
            if K[0] + K[k] > lim_sum:
                if trace is not None:
                    for kk in range(k, n):
                        _skip(range(kk), kk, target)
                break
            limit = int(np.searchsorted(K[:k], lim_sum - K[k], side="right"))
            if trace is not None:
                _skip(range(limit, k), k, target)

        d2 = sq_distances(P[:limit], P[k])
        examined += limit
        m = float(d2.max())
        if m >= best_d2:
            cand = min(_orig(int(j), k) for j in np.flatnonzero(d2 == m))
            if m > best_d2 or best_pair is None or cand < best_pair:
                best_d2 = m
                best_pair = cand
        if floor_d2 is not None:
            for j in np.flatnonzero(d2 >= floor_d2 - SWEEP_SLACK):
                near_pairs.append(_orig(int(j), k))
                near_d2.append(float(d2[j]))

    result = DiameterResult(m_n=math.sqrt(best_d2), pair=best_pair, pairs_examined=examined, n=n)
    return result, near_pairs, np.asarray(near_d2, dtype=np.float64)


def diameter_pruned(points, shape: ShapeParam, trace: Optional[list[SkippedPair]] = None) -> DiameterResult:
    """Exact M_n for points of E with a < 1 (use ``diameter`` for the ball)."""
    pts = as_points(points)
    if shape.a >= 1.0:
        raise ValueError(f"diameter_pruned needs a<1, got a={shape.a}; use diameter_bruteforce")
    if not np.all(contains_many(pts, shape)):
        raise ValueError(f"diameter_pruned needs all points inside E a={shape.a}")
    result, _, _ = _sweep(pts, _DefectKey(shape), trace=trace)
    return result


def diameter_norm_pruned(points, trace: Optional[list[SkippedPair]] = None) -> DiameterResult:
    """Exact M_n for any point set, pruned by ‖x−y‖ <= ‖x‖+‖y‖."""
    result, _, _ = _sweep(as_points(points), _NormKey(), trace=trace)
    return result


def _key_for(shape: ShapeParam):
    return _NormKey() if shape.a >= 1.0 else _DefectKey(shape)


def diameter(points, shape: ShapeParam) -> DiameterResult:
    if shape.a >= 1.0:
        return diameter_norm_pruned(points)
    return diameter_pruned(points, shape)


def _floor_for(eps: float) -> float:
    return (2.0 - eps) ** 2 if eps < 2.0 else 0.0


def near_diametral_counts(
    points, t_grid, shape: ShapeParam, exponent: float = INTERIOR_EXPONENT
) -> tuple[DiameterResult, np.ndarray, np.ndarray]:
    """Single sweep giving M_n and N_n(t) for every t of ``t_grid``.

    Returns (diameter, counts per t, rescaled deficits of all candidate pairs).
    Pair membership is decided on the rescaled deficit n^exponent·W, the
    same quantity the limit law is stated for.
    """
    pts = as_points(points)
    n = _require_pairs(pts)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(t_grid < 0.0):
        raise ValueError(f"invalid t_grid={t_grid}, need t>=0")
    t_max = float(t_grid.max()) if t_grid.size else 0.0
    eps_max = t_max * n ** (-exponent)
    result, _, near_d2 = _sweep(pts, _key_for(shape), floor_d2=_floor_for(eps_max))
    scaled = rescale(2.0 - np.sqrt(near_d2), n, exponent)
    counts = np.array([int(np.count_nonzero(scaled <= t)) for t in t_grid], dtype=np.int64)
    return result, counts, scaled


def count_near_diametral(points, t: float, shape: ShapeParam, exponent: float = INTERIOR_EXPONENT) -> NearDiametralCount:
    pts = as_points(points)
    n = _require_pairs(pts)
    if t < 0.0:
        raise ValueError(f"invalid t={t}, need t>=0")
    eps = t * n ** (-exponent)
    _, pairs, near_d2 = _sweep(pts, _key_for(shape), floor_d2=_floor_for(eps))
    scaled = rescale(2.0 - np.sqrt(near_d2), n, exponent)
    hits = sorted((p, 2.0 - math.sqrt(d2)) for p, d2, s in zip(pairs, near_d2, scaled, strict=True) if s <= t)
    logger.debug("near diametral n=%s t=%s eps=%s candidates=%s count=%s", n, t, eps, len(pairs), len(hits))
    return NearDiametralCount(
        t=float(t), eps=eps, count=len(hits), pairs=[p for p, _ in hits],
        deficits=[PairDeficit(value=w, pair=p) for p, w in hits],
    )
