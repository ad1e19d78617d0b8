from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from scipy import stats

from oblatus.core.diameter import INTERIOR_EXPONENT, near_diametral_counts, rescale
from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.models import LimitLaw, PoissonSummary, SampleMethod, ShapeParam
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample

logger = logging.getLogger("oblatus.experiments.poisson")

DESK_MIN_N = 10_000
DESK_MIN_REPLICATIONS = 500


def _poisson_replication(
    a: float, method: SampleMethod, n: int, t_grid: np.ndarray, stream: RngStream
) -> tuple[np.ndarray, float]:
    shape = ShapeParam(a)
    pts = sample(method, stream, n, shape).points
    result, counts, _ = near_diametral_counts(pts, t_grid, shape, INTERIOR_EXPONENT)
    return counts, float(rescale(result.deficit, n, INTERIOR_EXPONENT))


def pmf_rows(counts: np.ndarray) -> list[list[float]]:
    """Empirical pmf per t column: row j lists P(N = k) for k = 0..max."""
    rows = []
    for col in counts.T:
        tally = np.bincount(col.astype(np.int64))
        rows.append((tally / col.size).tolist())
    return rows


def tv_to_poisson(pmf: Sequence[float], lam: float) -> float:
    k = np.arange(len(pmf))
    theory = stats.poisson.pmf(k, lam)
    tail = stats.poisson.sf(len(pmf) - 1, lam)
    return float(0.5 * (np.abs(np.asarray(pmf) - theory).sum() + tail))


def run_poisson_experiment(
    shape: ShapeParam,
    n: int,
    t_grid,
    replications: int,
    law: LimitLaw,
    streams: Sequence[RngStream],
    engine: ReplicationEngine | None = None,
    method: SampleMethod = "parameter",
) -> PoissonSummary:
    shape.require_interior()
    n, replications = int(n), int(replications)
    t_grid = np.asarray(t_grid, dtype=np.float64).ravel()
    if t_grid.size == 0 or np.any(t_grid < 0.0):
        raise ValueError(f"invalid t_grid={t_grid.tolist()}, need a nonempty grid of t>=0")
    if n < 2 or replications < 2:
        raise ValueError(f"invalid n={n} replications={replications}")
    if len(streams) != replications:
        raise ValueError(f"need one stream per replication, got {len(streams)} for replications={replications}")
    if n < DESK_MIN_N or replications < DESK_MIN_REPLICATIONS:
        logger.warning("poisson below desk budget n=%s replications=%s", n, replications)

    tasks = [(shape.a, method, n, t_grid, s) for s in streams]
    parts = run_ordered(engine, _poisson_replication, tasks, label="poisson replication")
    counts = np.stack([c for c, _ in parts])
    deficits = np.array([z for _, z in parts])

    mean = counts.mean(axis=0)
    var = counts.var(axis=0, ddof=1)
    zero = (counts == 0).mean(axis=0)
    pmf = pmf_rows(counts)
    lam = law.lambda_a * t_grid**3.5
    tv = np.array([tv_to_poisson(row, l) for row, l in zip(pmf, lam, strict=True)])

    # {N_n(t) = 0} and {rescaled deficit > t} must coincide in every replication
    chain = bool(np.all((counts == 0) == (deficits[:, None] > t_grid[None, :])))
    if not chain:
        logger.error("event identity violated a=%s n=%s", shape.a, n)
    for t, m, v, z in zip(t_grid, mean, var, zero, strict=True):
        logger.info("poisson t=%s mean=%s var=%s zero_fraction=%s", t, m, v, z)
    return PoissonSummary(
        a=shape.a,
        n=n,
        t_grid=t_grid,
        replications=replications,
        counts=counts,
        mean_count=mean,
        var_count=var,
        zero_fraction=zero,
        pmf_table=pmf,
        lambda_theory=lam,
        tv_distance=tv,
        rescaled_deficits=deficits,
        chain_check=chain,
    )
