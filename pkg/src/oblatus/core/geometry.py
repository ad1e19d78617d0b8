"""Exact and asymptotic geometry of the rotational ellipsoid E.

Points are parameterized around the equatorial circle by

    x(θ, δ, w) = (√(1−δ) cos θ, √(1−δ) sin θ, a w),   w² <= δ,

so δ is the radial defect from the equator and w the scaled height.
All scalar operations have vectorized companions (``*_many``) that use the
same floating-point arithmetic, so array and scalar paths agree bit for bit.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable

import numpy as np

from oblatus.core.models import EquatorialCoords, LocalCoords, Point3, ShapeParam

logger = logging.getLogger("oblatus.geometry")

TWO_PI = 2.0 * math.pi
FORM_SLACK = 1e-12
# working value at a = 0.5; the true constant depends on a and eps0
LOCALIZATION_C = 8.0


def _check_coords(delta, w) -> None:
    delta = np.asarray(delta, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(delta < 0.0) or np.any(delta > 1.0):
        raise ValueError(f"invalid delta={delta}, need 0<=delta<=1")
    if np.any(w * w > delta + FORM_SLACK):
        raise ValueError(f"invalid coords w={w} delta={delta}, need w^2<=delta")


def embed_many(theta, delta, w, shape: ShapeParam) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_coords(delta, w)
    r = np.sqrt(1.0 - delta)
    return np.stack([r * np.cos(theta), r * np.sin(theta), shape.a * w], axis=-1)


def embed(c: EquatorialCoords, shape: ShapeParam) -> Point3:
    return Point3.from_array(embed_many(c.theta, c.delta, c.w, shape))


def quadratic_form_many(points, shape: ShapeParam) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    planar = pts[..., 0] ** 2 + pts[..., 1] ** 2
    if shape.a == 0.0:
        return np.where(pts[..., 2] == 0.0, planar, np.inf)
    return planar + (pts[..., 2] / shape.a) ** 2


def contains_many(points, shape: ShapeParam) -> np.ndarray:
    return quadratic_form_many(points, shape) <= 1.0 + FORM_SLACK


def contains(p: Point3, shape: ShapeParam) -> bool:
    return bool(contains_many(p.as_array(), shape))


def radial_defects(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    delta = 1.0 - (pts[..., 0] ** 2 + pts[..., 1] ** 2)
    return np.clip(delta, 0.0, 1.0)


def extract_many(points, shape: ShapeParam) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    if not np.all(contains_many(pts, shape)):
        raise ValueError(f"point outside ellipsoid a={shape.a}")
    theta = np.mod(np.arctan2(pts[..., 1], pts[..., 0]), TWO_PI)
    theta = np.where(theta >= TWO_PI, 0.0, theta)
    # vertical axis: angle undefined, fixed to 0
    theta = np.where((pts[..., 0] == 0.0) & (pts[..., 1] == 0.0), 0.0, theta)
    delta = radial_defects(pts)
    if shape.a == 0.0:
        w = np.zeros_like(delta)
    else:
        w = pts[..., 2] / shape.a
        bound = np.sqrt(delta)
        w = np.clip(w, -bound, bound)
    return theta, delta, w


def extract(p: Point3, shape: ShapeParam) -> EquatorialCoords:
    theta, delta, w = extract_many(p.as_array(), shape)
    return EquatorialCoords(theta=float(theta), delta=float(delta), w=float(w))


def sq_distances(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Squared distances from ``p`` to every row of ``points``.

    The summation order (dx², then dy², then dz²) is fixed; every distance in
    the package goes through this function or ``sq_distance``.
    """
    dx = points[:, 0] - p[0]
    dy = points[:, 1] - p[1]
    dz = points[:, 2] - p[2]
    return dx * dx + dy * dy + dz * dz


def sq_distance(p: Point3, q: Point3) -> float:
    dx = p.x1 - q.x1
    dy = p.x2 - q.x2
    dz = p.x3 - q.x3
    return dx * dx + dy * dy + dz * dz


def deficit(p: Point3, q: Point3) -> float:
    return 2.0 - math.sqrt(sq_distance(p, q))


def deficits_from(points, index: int) -> np.ndarray:
    """Deficits from row ``index`` to every row (the entry at ``index`` itself is 2)."""
    pts = np.asarray(points, dtype=np.float64)
    if not 0 <= index < pts.shape[0]:
        raise ValueError(f"invalid index={index} for n={pts.shape[0]}")
    return 2.0 - np.sqrt(sq_distances(pts, pts[index]))


def antipodal_gap(theta: float, theta_p: float) -> float:
    psi = math.fmod(theta_p - theta, TWO_PI)
    if psi < 0.0:
        psi += TWO_PI
    psi -= math.pi
    if psi >= math.pi:
        psi -= TWO_PI
    if psi < -math.pi:
        psi += TWO_PI
    return psi


def local_G(c: LocalCoords, shape: ShapeParam) -> float:
    a2 = shape.a * shape.a
    return (c.s + c.sp) / 2.0 + c.tau * c.tau / 4.0 - a2 / 4.0 * (c.y - c.yp) ** 2


def local_G_many(s, sp, y, yp, tau, shape: ShapeParam) -> np.ndarray:
    a2 = shape.a * shape.a
    return (s + sp) / 2.0 + tau * tau / 4.0 - a2 / 4.0 * (y - yp) ** 2


def expansion_ratio(direction: LocalCoords, theta: float, eps: float, shape: ShapeParam) -> float:
    """Exact deficit of the pair at scale ``eps`` divided by ``eps * G(direction)``."""
    if eps <= 0.0:
        raise ValueError(f"invalid eps={eps}")
    g = local_G(direction, shape)
    if g == 0.0:
        raise ValueError("expansion ratio undefined for G(direction)=0")
    root = math.sqrt(eps)
    p = embed(EquatorialCoords(theta, eps * direction.s, root * direction.y), shape)
    theta_q = math.fmod(theta + math.pi + root * direction.tau, TWO_PI)
    if theta_q < 0.0:
        theta_q += TWO_PI
    q = embed(EquatorialCoords(theta_q, eps * direction.sp, root * direction.yp), shape)
    return deficit(p, q) / (eps * g)


def localization_ratios(p: Point3, q: Point3, eps: float, shape: ShapeParam) -> tuple[float, float, float]:
    """(δ+δ′)/ε, ψ²/ε and (w²+w′²)/ε for a nearly diametral pair."""
    if eps <= 0.0:
        raise ValueError(f"invalid eps={eps}")
    d = deficit(p, q)
    if d > eps:
        raise ValueError(f"localization not applicable: deficit={d} > eps={eps}")
    cp = extract(p, shape)
    cq = extract(q, shape)
    psi = antipodal_gap(cp.theta, cq.theta)
    return (
        (cp.delta + cq.delta) / eps,
        psi * psi / eps,
        (cp.w * cp.w + cq.w * cq.w) / eps,
    )


def localization_check(p: Point3, q: Point3, eps: float, C: float, shape: ShapeParam) -> bool:
    return all(r <= C for r in localization_ratios(p, q, eps, shape))


def localization_survey(
    pairs: Iterable[tuple[Point3, Point3]],
    eps: float,
    shape: ShapeParam,
    C: float = LOCALIZATION_C,
) -> float:
    """Largest localization ratio over the pairs with deficit <= eps.

    Pairs farther apart than eps are skipped. A maximum above C means C needs
    recalibrating for this shape, not that the geometry is wrong, so it is
    logged and returned rather than raised.
    """
    worst = 0.0
    used = 0
    for p, q in pairs:
        if deficit(p, q) > eps:
            continue
        worst = max(worst, *localization_ratios(p, q, eps, shape))
        used += 1
    if worst > C:
        logger.warning("localization constant exceeded a=%s eps=%s pairs=%s max_ratio=%s C=%s",
                       shape.a, eps, used, worst, C)
    else:
        logger.info("localization ok a=%s eps=%s pairs=%s max_ratio=%s", shape.a, eps, used, worst)
    return worst


def _check_defects(delta_i, delta_j) -> None:
    for name, d in (("delta_i", delta_i), ("delta_j", delta_j)):
        d = np.asarray(d)
        if np.any(d < 0.0) or np.any(d > 1.0):
            raise ValueError(f"invalid {name}={d}, need 0<=delta<=1")


def pair_upper_bound(delta_i, delta_j, shape: ShapeParam):
    """Largest distance any two points with radial defects δᵢ, δⱼ can have.

    Attained by opposite angles and opposite vertical signs. Not monotone in
    the defects near 0; see ``sweep_bound`` for the monotone majorant.
    """
    _check_defects(delta_i, delta_j)
    di = np.asarray(delta_i, dtype=np.float64)
    dj = np.asarray(delta_j, dtype=np.float64)
    planar = np.sqrt(1.0 - di) + np.sqrt(1.0 - dj)
    vertical = np.sqrt(di) + np.sqrt(dj)
    out = np.sqrt(planar * planar + shape.a * shape.a * vertical * vertical)
    return float(out) if out.ndim == 0 else out


def sweep_bound_sq(delta_i, delta_j, shape: ShapeParam):
    """Squared monotone majorant 4 − 2(1−a²)(δᵢ+δⱼ) of ``pair_upper_bound``².

    Follows from (u+v)² <= 2(u²+v²) on both terms; equality when δᵢ = δⱼ.
    """
    a2 = shape.a * shape.a
    out = 4.0 - 2.0 * (1.0 - a2) * (np.asarray(delta_i, dtype=np.float64) + np.asarray(delta_j, dtype=np.float64))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def sweep_bound(delta_i, delta_j, shape: ShapeParam):
    _check_defects(delta_i, delta_j)
    out = np.sqrt(sweep_bound_sq(delta_i, delta_j, shape))
    return float(out) if np.ndim(out) == 0 else out
