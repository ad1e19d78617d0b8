"""Normalization exponent of 2 − M_n across the three shape regimes.

circle:   uniform disk in the plane x3 = 0 (the a -> 0 support), exponent 4/5
interior: ellipsoid with 0 < a < 1, exponent 4/7
ball:     unit ball (a = 1), exponent 2/3
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from oblatus.core.diameter import diameter
from oblatus.core.engine import ReplicationEngine, run_ordered
from oblatus.core.models import ExponentMode, ExponentReport, ShapeParam
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample_ball_scaling, sample_disk_diagnostic, sample_parameter

logger = logging.getLogger("oblatus.experiments.exponent")

EXPECTED_EXPONENT: dict[str, float] = {"circle": 4.0 / 5.0, "interior": 4.0 / 7.0, "ball": 2.0 / 3.0}


def shape_for_mode(mode: ExponentMode, a: float) -> ShapeParam:
    if mode == "circle":
        return ShapeParam(0.0)
    if mode == "ball":
        return ShapeParam(1.0)
    if mode == "interior":
        shape = ShapeParam(a)
        shape.require_interior()
        return shape
    raise ValueError(f"unknown exponent mode={mode}")


def _exponent_replication(mode: ExponentMode, a: float, n: int, stream: RngStream) -> float:
    shape = shape_for_mode(mode, a)
    if mode == "circle":
        pts = sample_disk_diagnostic(stream, n).points
    elif mode == "ball":
        pts = sample_ball_scaling(stream, n, shape).points
    else:
        pts = sample_parameter(stream, n, shape).points
    return diameter(pts, shape).deficit


def run_exponent_experiment(
    mode: ExponentMode,
    n_grid,
    replications: int,
    streams: Sequence[RngStream],
    a: float = 0.5,
    engine: ReplicationEngine | None = None,
) -> ExponentReport:
    """Grid point g of replication r draws from ``streams[r].child(g)``."""
    shape = shape_for_mode(mode, a)
    n_grid = np.asarray(n_grid, dtype=np.int64).ravel()
    replications = int(replications)
    if n_grid.size < 2 or np.any(n_grid < 2):
        raise ValueError(f"invalid n_grid={n_grid.tolist()}, need >=2 sizes each >=2")
    if len(streams) != replications:
        raise ValueError(f"need one stream per replication, got {len(streams)} for replications={replications}")
    if n_grid.max() < 10 * n_grid.min():
        logger.warning("exponent n_grid spans less than a decade n_grid=%s", n_grid.tolist())

    means = []
    for g, n in enumerate(n_grid):
        tasks = [(mode, shape.a, int(n), s.child(g)) for s in streams]
        deficits = run_ordered(engine, _exponent_replication, tasks, label=f"exponent n={n}")
        means.append(float(np.mean(deficits)))
        logger.info("exponent mode=%s n=%s mean_deficit=%s", mode, n, means[-1])
    means_arr = np.array(means)
    slope, _ = np.polyfit(np.log(n_grid.astype(np.float64)), -np.log(means_arr), 1)
    logger.info("exponent mode=%s fitted=%s expected=%s", mode, slope, EXPECTED_EXPONENT[mode])
    return ExponentReport(
        a_mode=mode,
        a=shape.a,
        n_grid=n_grid,
        replications=replications,
        mean_deficits=means_arr,
        fitted_exponent=float(slope),
        expected_exponent=EXPECTED_EXPONENT[mode],
    )
