"""The limit-law constants I_a, K_a = 2Λ_a and Λ_a = 9 I_a / (64π).

I_a is the volume of {G <= 1} inside A = {s, s' >= 0, y² <= s, y'² <= s'},
estimated by two independent routes:

* ``i_a_mc5d``: hit-or-miss Monte Carlo in the explicit box B(a).
  From G <= 1 and (y−y')² <= 2(y²+y'²) <= 2(s+s'):
  (s+s')(1−a²)/2 <= 1, hence s, s' <= S_max = 2/(1−a²); then
  τ² <= 4 + a²(y−y')² <= 4 + 4a²·S_max =: T_max².
* ``i_a_reduced3d``: (s, s') integrated out exactly: over
  {s >= y², s' >= y'², s+s' <= 2c} the area is ((2c − y² − y'²)₊)²/2 with
  c = 1 − τ²/4 + (a²/4)(y−y')², leaving a 3-d midpoint rule in (y, y', τ).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.geometry import local_G_many
from oblatus.core.models import ConstantCertificate, ConstantEstimate, LimitLaw, ShapeParam
from oblatus.core.rng import RngStream

if TYPE_CHECKING:
    from oblatus.storage.repositories import ConstantCacheRepo

logger = logging.getLogger("oblatus.constants")

MC_MAX_A = 0.95
MC_CHUNK = 1_000_000
SHELL_WIDTH = 1e-9
LAMBDA_FACTOR = 9.0 / (64.0 * math.pi)
WEIBULL_SHAPE = 3.5


@dataclass(frozen=True)
class BoundingBox:
    s_max: float
    y_max: float
    t_max: float

    @property
    def volume(self) -> float:
        return self.s_max**2 * (2.0 * self.y_max) ** 2 * (2.0 * self.t_max)


def bounding_box(shape: ShapeParam) -> BoundingBox:
    shape.require_interior()
    a2 = shape.a * shape.a
    s_max = 2.0 / (1.0 - a2)
    return BoundingBox(s_max=s_max, y_max=math.sqrt(s_max), t_max=math.sqrt(4.0 + 4.0 * a2 * s_max))


def reduced_integrand(y, yp, tau, shape: ShapeParam):
    a2 = shape.a * shape.a
    c = 1.0 - tau * tau / 4.0 + a2 / 4.0 * (y - yp) ** 2
    b = np.maximum(2.0 * c - y * y - yp * yp, 0.0)
    return 0.5 * b * b


def _mc_chunk(a: float, box: BoundingBox, m: int, stream: RngStream) -> tuple[int, int]:
    rng = stream.generator()
    u = rng.random((m, 5))
    s = u[:, 0] * box.s_max
    sp = u[:, 1] * box.s_max
    y = (2.0 * u[:, 2] - 1.0) * box.y_max
    yp = (2.0 * u[:, 3] - 1.0) * box.y_max
    tau = (2.0 * u[:, 4] - 1.0) * box.t_max
    g = local_G_many(s, sp, y, yp, tau, ShapeParam(a))
    hit = (y * y <= s) & (yp * yp <= sp) & (g <= 1.0)
    shell = (
        (s > box.s_max - SHELL_WIDTH)
        | (sp > box.s_max - SHELL_WIDTH)
        | (np.abs(y) > box.y_max - SHELL_WIDTH)
        | (np.abs(yp) > box.y_max - SHELL_WIDTH)
        | (np.abs(tau) > box.t_max - SHELL_WIDTH)
    )
    return int(np.count_nonzero(hit)), int(np.count_nonzero(hit & shell))


def i_a_mc5d(
    shape: ShapeParam,
    n_samples: int,
    stream: RngStream,
    engine: ReplicationEngine | None = None,
    chunk: int = MC_CHUNK,
) -> ConstantEstimate:
    shape.require_interior()
    if shape.a > MC_MAX_A:
        raise ValueError(f"mc5d bounding box too large for a={shape.a}, need a<={MC_MAX_A}")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError(f"invalid mc budget={n_samples}")
    box = bounding_box(shape)
    sizes = [chunk] * (n_samples // chunk)
    if n_samples % chunk:
        sizes.append(n_samples % chunk)
    tasks = [(shape.a, box, m, stream.child(c)) for c, m in enumerate(sizes)]
    parts = run_ordered(engine, _mc_chunk, tasks, label="mc5d chunk")
    hits = sum(h for h, _ in parts)
    shell = sum(sh for _, sh in parts)
    p = hits / n_samples
    value = box.volume * p
    std_error = box.volume * math.sqrt(p * (1.0 - p) / n_samples)
    if shell:
        logger.warning("mc5d hits on box shell a=%s shell_hits=%s", shape.a, shell)
    logger.info("mc5d a=%s samples=%s hits=%s value=%s stderr=%s", shape.a, n_samples, hits, value, std_error)
    return ConstantEstimate(
        value=value, std_error=std_error, method="mc5d", a=shape.a, budget=n_samples, shell_hits=shell
    )


def _slice_sums(a: float, box: BoundingBox, cells: int, start: int, stop: int) -> list[float]:
    shape = ShapeParam(a)
    hy = 2.0 * box.y_max / cells
    mids = -box.y_max + (np.arange(cells) + 0.5) * hy
    y, yp = np.meshgrid(mids, mids, indexing="ij")
    ht = box.t_max / (cells // 2)
    out = []
    for k in range(start, stop):
        tau = (k + 0.5) * ht
        out.append(float(np.sum(reduced_integrand(y, yp, tau, shape))))
    return out


def _midpoint_rule(shape: ShapeParam, cells: int, engine: ReplicationEngine | None, slices_per_task: int) -> float:
    """Midpoint rule with ``cells`` per axis; τ >= 0 only (the integrand is even in τ)."""
    box = bounding_box(shape)
    half = cells // 2
    tasks = [(shape.a, box, cells, lo, min(lo + slices_per_task, half)) for lo in range(0, half, slices_per_task)]
    parts = run_ordered(engine, _slice_sums, tasks, label="reduced3d slices")
    hy = 2.0 * box.y_max / cells
    ht = box.t_max / half
    return 2.0 * ht * hy * hy * math.fsum(v for part in parts for v in part)


def i_a_reduced3d(
    shape: ShapeParam,
    grid: int = 400,
    engine: ReplicationEngine | None = None,
    slices_per_task: int = 25,
) -> ConstantEstimate:
    shape.require_interior()
    grid = int(grid)
    if grid < 8 or grid % 4:
        raise ValueError(f"invalid quadrature grid={grid}, need a multiple of 4 >= 8")
    coarse = _midpoint_rule(shape, grid // 2, engine, slices_per_task)
    mid = _midpoint_rule(shape, grid, engine, slices_per_task)
    fine = _midpoint_rule(shape, 2 * grid, engine, slices_per_task)
    err_prev = abs(mid - coarse)
    err = abs(fine - mid)
    converged = err <= err_prev
    if not converged:
        logger.warning("reduced3d refinement not converging a=%s errors=%s,%s", shape.a, err_prev, err)
    logger.info("reduced3d a=%s grid=%s value=%s error=%s", shape.a, grid, fine, err)
    return ConstantEstimate(
        value=fine, std_error=0.0, method="reduced3d", a=shape.a, budget=grid, error_estimate=err, converged=converged
    )


def lambda_a(i_a: float, a: float = math.nan) -> LimitLaw:
    if not i_a > 0.0:
        raise ValueError(f"invalid I_a={i_a}, need I_a>0")
    return LimitLaw(lambda_a=LAMBDA_FACTOR * i_a, a=a)


def weibull_survival(t, law: LimitLaw):
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0):
        raise ValueError(f"invalid t={t}, need t>=0")
    out = np.exp(-law.lambda_a * t_arr**WEIBULL_SHAPE)
    return float(out) if out.ndim == 0 else out


def weibull_distribution(law: LimitLaw):
    """scipy frozen law of Z: P(Z > t) = exp(−Λ t^(7/2))."""
    return stats.weibull_min(c=WEIBULL_SHAPE, scale=law.lambda_a ** (-1.0 / WEIBULL_SHAPE))


def weibull_quantile(p: float, law: LimitLaw) -> float:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"invalid p={p}")
    return (-math.log1p(-p) / law.lambda_a) ** (1.0 / WEIBULL_SHAPE)


def median_rescaled(law: LimitLaw) -> float:
    return (math.log(2.0) / law.lambda_a) ** (2.0 / 7.0)


def t_for_mean(mean: float, law: LimitLaw) -> float:
    """t with Λ t^(7/2) = mean."""
    if mean <= 0.0:
        raise ValueError(f"invalid mean={mean}")
    return (mean / law.lambda_a) ** (2.0 / 7.0)


def limit_law_from_estimates(
    mc: ConstantEstimate, reduced: ConstantEstimate, sigmas: float = 3.0
) -> ConstantCertificate:
    """Dual-route certificate; Λ is taken from the deterministic route."""
    if mc.a != reduced.a:
        raise ValueError(f"estimates for different shapes a={mc.a} vs a={reduced.a}")
    diff = abs(mc.value - reduced.value)
    combined = mc.error_bar + reduced.error_bar
    agree = diff <= sigmas * combined
    if not agree:
        logger.warning("constant routes disagree a=%s diff=%s combined_error=%s", mc.a, diff, combined)
    return ConstantCertificate(
        mc5d=mc, reduced3d=reduced, difference=diff, combined_error=combined, agree=agree,
        law=lambda_a(reduced.value, reduced.a),
    )


def estimate(
    shape: ShapeParam,
    method: str,
    budget: int,
    stream: RngStream | None = None,
    engine: ReplicationEngine | None = None,
    cache: ConstantCacheRepo | None = None,
) -> ConstantEstimate:
    """Cached front end over both routes; the cache key is (a, method, budget)."""
    if cache is not None:
        hit = cache.get(shape.a, method, budget)
        if hit is not None:
            logger.info("constant cache hit a=%s method=%s budget=%s", shape.a, method, budget)
            return hit
    if method == "mc5d":
        if stream is None:
            raise ValueError("mc5d needs an RngStream")
        est = i_a_mc5d(shape, budget, stream, engine=engine)
    elif method == "reduced3d":
        est = i_a_reduced3d(shape, budget, engine=engine)
    else:
        raise ValueError(f"unknown constant method={method}")
    if cache is not None:
        cache.put(est)
    return est
