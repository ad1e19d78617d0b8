from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from oblatus.core.geometry import contains_many, extract_many
from oblatus.core.models import ShapeParam
from oblatus.core.rng import RngStream
from oblatus.core.sampling import (
    ACCEPTANCE_RATE,
    sample,
    sample_ball_scaling,
    sample_circle_diagnostic,
    sample_disk_diagnostic,
    sample_parameter,
    sample_rejection,
)

HALF = ShapeParam(0.5)


@pytest.mark.parametrize("method", ["parameter", "rejection", "ball-scaling"])
def test_samplers_stay_inside_and_reproduce(method):
    a = sample(method, RngStream(3, 1), 5000, HALF)
    b = sample(method, RngStream(3, 1), 5000, HALF)
    assert len(a) == 5000
    assert np.all(contains_many(a.points, HALF))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample(method, RngStream(3, 2), 5000, HALF).points)


@pytest.mark.parametrize("a", [0.5, 0.9])
def test_rejection_acceptance_rate(a):
    # ~1.1e6 proposals
    batch = sample_rejection(RngStream(5, 0), 600_000, ShapeParam(a))
    assert batch.proposals >= 1_000_000
    assert batch.acceptance_rate == pytest.approx(ACCEPTANCE_RATE, abs=0.002)
    assert ACCEPTANCE_RATE == pytest.approx(0.5236, abs=1e-4)


def test_second_moments():
    pts = sample_parameter(RngStream(6, 0), 200_000, HALF).points
    assert np.mean(pts[:, 0] ** 2) == pytest.approx(0.2, abs=0.005)
    assert np.mean(pts[:, 2] ** 2) == pytest.approx(0.25 / 5, abs=0.002)


def test_samplers_agree_in_distribution():
    n = 20_000
    xs = [
        sample_parameter(RngStream(8, 0), n, HALF).points,
        sample_rejection(RngStream(8, 1), n, HALF).points,
        sample_ball_scaling(RngStream(8, 2), n, HALF).points,
    ]
    for i in range(3):
        for j in range(i + 1, 3):
            for k in range(3):
                assert stats.ks_2samp(xs[i][:, k], xs[j][:, k]).statistic < 0.03


def test_diagnostic_samplers():
    circle = sample_circle_diagnostic(RngStream(1, 0), 1000).points
    assert np.allclose(np.linalg.norm(circle, axis=1), 1.0)
    assert np.all(circle[:, 2] == 0.0)
    disk = sample_disk_diagnostic(RngStream(1, 1), 1000).points
    assert np.all(disk[:, 2] == 0.0)
    assert np.all(np.hypot(disk[:, 0], disk[:, 1]) <= 1.0)
    # uniform disk: E r² = 1/2
    assert np.mean(disk[:, 0] ** 2 + disk[:, 1] ** 2) == pytest.approx(0.5, abs=0.05)


def test_solid_samplers_need_positive_a():
    with pytest.raises(ValueError):
        sample_parameter(RngStream(1, 0), 10, ShapeParam(0.0))
    with pytest.raises(ValueError):
        sample("nope", RngStream(1, 0), 10, HALF)


def test_empty_sample():
    batch = sample_parameter(RngStream(1, 0), 0, HALF)
    assert len(batch) == 0
    assert batch.acceptance_rate is None


def _cell_counts(pts: np.ndarray, shape: ShapeParam, k: int = 4) -> np.ndarray:
    # (θ, δ, w) mapped to three independent uniforms
    theta, delta, w = extract_many(pts, shape)
    root = np.sqrt(delta)
    u = np.column_stack([
        theta / (2.0 * np.pi),
        delta**1.5,
        (np.divide(w, root, out=np.zeros_like(w), where=root > 0.0) + 1.0) / 2.0,
    ])
    cells = np.clip((u * k).astype(np.int64), 0, k - 1)
    flat = (cells[:, 0] * k + cells[:, 1]) * k + cells[:, 2]
    return np.bincount(flat, minlength=k**3)


@pytest.mark.parametrize("method", ["parameter", "rejection", "ball-scaling"])
def test_chi_square_uniformity_on_parameter_cells(method):
    counts = _cell_counts(sample(method, RngStream(21, 0), 200_000, HALF).points, HALF)
    assert counts.size == 64
    assert stats.chisquare(counts).pvalue > 0.001


def test_parameter_box_fraction():
    theta, delta, w = extract_many(sample_parameter(RngStream(22, 0), 1_000_000, HALF).points, HALF)
    inside = (theta <= np.pi) & (delta >= 0.25) & (delta <= 0.5) & (w >= 0.0) & (w <= 0.1)
    # constant density 3/(8π) on {w² <= δ}
    expected = 3.0 / (8.0 * np.pi) * np.pi * 0.25 * 0.1
    assert expected == pytest.approx(0.009375)
    assert np.mean(inside) == pytest.approx(expected, abs=0.0005)


@pytest.mark.slow
@pytest.mark.parametrize("method", ["parameter", "rejection", "ball-scaling"])
def test_chi_square_uniformity_full_budget(method):
    counts = _cell_counts(sample(method, RngStream(23, 0), 1_000_000, HALF).points, HALF)
    assert stats.chisquare(counts).pvalue > 0.001


@pytest.mark.slow
def test_samplers_agree_at_full_budget():
    # 4e6 per sampler keeps 0.002 far out in the KS tail
    n = 4_000_000
    xs = [
        sample_parameter(RngStream(24, 0), n, HALF).points,
        sample_rejection(RngStream(24, 1), n, HALF).points,
        sample_ball_scaling(RngStream(24, 2), n, HALF).points,
    ]
    for i in range(3):
        for j in range(i + 1, 3):
            for k in range(3):
                assert stats.ks_2samp(xs[i][:, k], xs[j][:, k]).statistic < 0.002
