from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Optional

import numpy as np

from oblatus.core.constants import median_rescaled
from oblatus.core.diameter import INTERIOR_EXPONENT, diameter, rescale
from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.models import LimitLaw, LimitLawReport, SampleMethod, ShapeParam, TailCurve
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample
from oblatus.experiments.fitting import ks_against_law
from oblatus.experiments.tail import empirical_k

logger = logging.getLogger("oblatus.experiments.limit")

DESK_MIN_REPLICATIONS = 1000


def _limit_replication(a: float, method: SampleMethod, n: int, stream: RngStream) -> float:
    shape = ShapeParam(a)
    result = diameter(sample(method, stream, n, shape).points, shape)
    return float(rescale(result.deficit, n, INTERIOR_EXPONENT))


def run_limit_experiment(
    shape: ShapeParam,
    n: int,
    replications: int,
    law: LimitLaw,
    streams: Sequence[RngStream],
    engine: ReplicationEngine | None = None,
    method: SampleMethod = "parameter",
    tail: Optional[TailCurve] = None,
) -> LimitLawReport:
    """KS comparison of n^(4/7)(2 − M_n) with the Weibull limit.

    With ``tail`` the statistic is also recomputed for Λ = K̂/2, K̂ read off the
    measured two-point tail.
    """
    shape.require_interior()
    n, replications = int(n), int(replications)
    if n < 2 or replications < 1:
        raise ValueError(f"invalid n={n} replications={replications}")
    if len(streams) != replications:
        raise ValueError(f"need one stream per replication, got {len(streams)} for replications={replications}")
    if replications < DESK_MIN_REPLICATIONS:
        logger.warning("limit below desk budget replications=%s", replications)

    tasks = [(shape.a, method, n, s) for s in streams]
    z = np.array(run_ordered(engine, _limit_replication, tasks, label="limit replication"))
    ks, pvalue = ks_against_law(z, law)

    ks_tail = None
    if tail is not None:
        tail_law = LimitLaw(lambda_a=empirical_k(tail) / 2.0, a=shape.a)
        ks_tail, _ = ks_against_law(z, tail_law)
        logger.info("limit tail-derived lambda=%s ks=%s", tail_law.lambda_a, ks_tail)

    logger.info("limit a=%s n=%s replications=%s ks=%s pvalue=%s", shape.a, n, replications, ks, pvalue)
    return LimitLawReport(
        a=shape.a,
        n=n,
        replications=replications,
        rescaled_deficits=z,
        ks_statistic=ks,
        ks_pvalue=pvalue,
        theory=law,
        empirical_median=float(np.median(z)),
        theory_median=median_rescaled(law),
        ks_statistic_tail_lambda=ks_tail,
    )
