from __future__ import annotations

import logging
import math

import numpy as np

from oblatus.core.geometry import TWO_PI, embed_many
from oblatus.core.models import SampleBatch, SampleMethod, ShapeParam
from oblatus.core.rng import RngStream

logger = logging.getLogger("oblatus.sampling")

DEGENERATE_PLANE = ShapeParam(0.0)
ACCEPTANCE_RATE = math.pi / 6.0


def _check_count(n: int) -> int:
    n = int(n)
    if n < 0:
        raise ValueError(f"invalid n={n}")
    return n


def _check_solid(shape: ShapeParam) -> None:
    if shape.a <= 0.0:
        raise ValueError(f"sampler needs 0<a<=1, got a={shape.a}; use the circle/disk diagnostics for a=0")


def sample_parameter(stream: RngStream, n: int, shape: ShapeParam) -> SampleBatch:
    """Exact sampler through the uniform law of (Θ, Δ, W) on {w² <= δ}.

    Marginal density of Δ is (3/2)√δ, so Δ = U^(2/3); W | Δ is uniform on
    [−√Δ, √Δ].
    """
    n = _check_count(n)
    _check_solid(shape)
    rng = stream.generator()
    theta = rng.uniform(0.0, TWO_PI, n)
    delta = rng.random(n) ** (2.0 / 3.0)
    w = rng.uniform(-1.0, 1.0, n) * np.sqrt(delta)
    pts = embed_many(theta, delta, w, shape) if n else np.empty((0, 3))
    return SampleBatch(points=pts, shape=shape, method="parameter", stream=stream)


def sample_rejection(stream: RngStream, n: int, shape: ShapeParam) -> SampleBatch:
    """Rejection from the bounding box [−1,1]² × [−a,a]; acceptance rate π/6."""
    n = _check_count(n)
    _check_solid(shape)
    rng = stream.generator()
    a = shape.a
    chunks: list[np.ndarray] = []
    have = 0
    proposals = 0
    while have < n:
        need = n - have
        m = max(64, int(need / ACCEPTANCE_RATE * 1.1) + 16)
        box = rng.uniform(-1.0, 1.0, (m, 3))
        box[:, 2] *= a
        ok = box[:, 0] ** 2 + box[:, 1] ** 2 + (box[:, 2] / a) ** 2 <= 1.0
        idx = np.flatnonzero(ok)
        if idx.size >= need:
            idx = idx[:need]
            proposals += int(idx[-1]) + 1
        else:
            proposals += m
        chunks.append(box[idx])
        have += idx.size
    pts = np.concatenate(chunks) if chunks else np.empty((0, 3))
    return SampleBatch(points=pts, shape=shape, method="rejection", stream=stream, proposals=proposals)


def sample_ball_scaling(stream: RngStream, n: int, shape: ShapeParam) -> SampleBatch:
    """Uniform unit ball (Gaussian direction, radius U^(1/3)) mapped by x3 -> a·x3."""
    n = _check_count(n)
    _check_solid(shape)
    rng = stream.generator()
    g = rng.standard_normal((n, 3))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random((n, 1)) ** (1.0 / 3.0)
    pts = g / norms * radius
    pts[:, 2] *= shape.a
    return SampleBatch(points=pts, shape=shape, method="ball-scaling", stream=stream)


def sample_circle_diagnostic(stream: RngStream, n: int) -> SampleBatch:
    """Points on the equatorial unit circle (cos Θ, sin Θ, 0)."""
    n = _check_count(n)
    rng = stream.generator()
    theta = rng.uniform(0.0, TWO_PI, n)
    pts = np.stack([np.cos(theta), np.sin(theta), np.zeros(n)], axis=-1)
    return SampleBatch(points=pts, shape=DEGENERATE_PLANE, method="circle-diagnostic", stream=stream)


def sample_disk_diagnostic(stream: RngStream, n: int) -> SampleBatch:
    """Uniform points in the unit disk of the plane x3 = 0 (the a -> 0 support)."""
    n = _check_count(n)
    rng = stream.generator()
    theta = rng.uniform(0.0, TWO_PI, n)
    r = np.sqrt(rng.random(n))
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros(n)], axis=-1)
    return SampleBatch(points=pts, shape=DEGENERATE_PLANE, method="disk-diagnostic", stream=stream)


def sample(method: SampleMethod, stream: RngStream, n: int, shape: ShapeParam) -> SampleBatch:
    if method == "parameter":
        return sample_parameter(stream, n, shape)
    if method == "rejection":
        return sample_rejection(stream, n, shape)
    if method == "ball-scaling":
        return sample_ball_scaling(stream, n, shape)
    if method == "circle-diagnostic":
        return sample_circle_diagnostic(stream, n)
    if method == "disk-diagnostic":
        return sample_disk_diagnostic(stream, n)
    raise ValueError(f"unknown sample method={method}")
