from __future__ import annotations

import math

import numpy as np
import pytest

from oblatus.core.geometry import (
    antipodal_gap,
    contains,
    contains_many,
    deficit,
    deficits_from,
    embed,
    expansion_ratio,
    extract,
    local_G,
    local_G_many,
    localization_check,
    localization_ratios,
    localization_survey,
    pair_upper_bound,
    radial_defects,
    sq_distances,
    sweep_bound,
)
from oblatus.core.diameter import count_near_diametral
from oblatus.core.models import EquatorialCoords, LocalCoords, Point3, ShapeParam
from oblatus.core.rng import RngStream
from oblatus.core.sampling import sample_parameter

HALF = ShapeParam(0.5)


def test_shape_param_validation():
    with pytest.raises(ValueError):
        ShapeParam(-0.1)
    with pytest.raises(ValueError):
        ShapeParam(1.5)
    assert ShapeParam(0.0).degenerate
    assert ShapeParam(1.0).degenerate
    with pytest.raises(ValueError):
        ShapeParam(1.0).require_interior()


def test_embed_extract_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(200):
        delta = float(rng.random())
        w = float(rng.uniform(-1, 1)) * math.sqrt(delta)
        c = EquatorialCoords(theta=float(rng.uniform(0, 2 * math.pi)), delta=delta, w=w)
        p = embed(c, HALF)
        assert contains(p, HALF)
        back = extract(p, HALF)
        assert back.delta == pytest.approx(c.delta, abs=1e-12)
        assert back.w == pytest.approx(c.w, abs=1e-12)
        if c.delta < 0.99:
            assert math.cos(back.theta - c.theta) == pytest.approx(1.0, abs=1e-9)


def test_embed_rejects_bad_coords():
    with pytest.raises(ValueError):
        embed(EquatorialCoords(0.0, 0.04, 0.5), HALF)
    with pytest.raises(ValueError):
        embed(EquatorialCoords(0.0, 1.5, 0.0), HALF)


def test_extract_rejects_outside_point():
    with pytest.raises(ValueError):
        extract(Point3(0.0, 0.0, 0.6), HALF)


def test_vertical_axis_theta_is_zero():
    c = extract(Point3(0.0, 0.0, 0.25), HALF)
    assert c.theta == 0.0
    assert c.delta == 1.0
    assert c.w == pytest.approx(0.5)


def test_antipodal_equator_pair_has_zero_deficit():
    p = embed(EquatorialCoords(0.3, 0.0, 0.0), HALF)
    q = embed(EquatorialCoords(0.3 + math.pi, 0.0, 0.0), HALF)
    assert deficit(p, q) == pytest.approx(0.0, abs=1e-12)


def test_antipodal_gap_range():
    assert antipodal_gap(0.0, math.pi) == pytest.approx(0.0)
    assert antipodal_gap(0.0, math.pi + 0.1) == pytest.approx(0.1)
    assert antipodal_gap(1.0, 1.0 + math.pi - 0.2) == pytest.approx(-0.2)
    for theta in np.linspace(0, 7, 30):
        psi = antipodal_gap(float(theta), 0.123)
        assert -math.pi <= psi < math.pi


@pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
def test_pair_upper_bound_is_sound_for_sampled_pairs(a):
    shape = ShapeParam(a)
    pts = sample_parameter(RngStream(11, 0), 1000, shape).points
    delta = radial_defects(pts)
    for i in range(1000):
        d = np.sqrt(sq_distances(pts, pts[i]))
        bound = pair_upper_bound(np.full(1000, delta[i]), delta, shape)
        assert np.all(d <= bound + 1e-12)
        assert np.all(bound <= sweep_bound(np.full(1000, delta[i]), delta, shape) + 1e-12)


def test_pair_upper_bound_not_monotone_but_sweep_bound_is():
    assert pair_upper_bound(1.0, 0.0101, HALF) > pair_upper_bound(1.0, 0.0, HALF)
    assert pair_upper_bound(1.0, 0.0, HALF) ** 2 == pytest.approx(1.25)
    grid = np.linspace(0.0, 1.0, 51)
    for d in grid:
        vals = sweep_bound(np.full(51, d), grid, HALF)
        assert np.all(np.diff(vals) <= 0.0)


def test_sweep_bound_matches_on_diagonal():
    for d in (0.0, 0.1, 0.3, 0.9):
        assert sweep_bound(d, d, HALF) == pytest.approx(pair_upper_bound(d, d, HALF), rel=1e-12)
    assert pair_upper_bound(0.0, 0.0, HALF) == pytest.approx(2.0)


def test_expansion_ratio_tends_to_one():
    direction = LocalCoords(s=1.0, sp=0.5, y=0.3, yp=-0.2, tau=0.4)
    assert direction.in_region()
    r3 = expansion_ratio(direction, 0.7, 1e-3, HALF)
    r6 = expansion_ratio(direction, 0.7, 1e-6, HALF)
    assert abs(r6 - 1.0) < abs(r3 - 1.0) + 1e-7
    assert r6 == pytest.approx(1.0, abs=1e-2)


def test_expansion_ratio_random_directions():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 50:
        s, sp = rng.uniform(0, 2, 2)
        y = rng.uniform(-1, 1) * math.sqrt(s)
        yp = rng.uniform(-1, 1) * math.sqrt(sp)
        d = LocalCoords(float(s), float(sp), float(y), float(yp), float(rng.uniform(-2, 2)))
        g = (d.s + d.sp) / 2 + d.tau**2 / 4 - 0.25 / 4 * (d.y - d.yp) ** 2
        if g < 0.05:
            continue
        ratios = [expansion_ratio(d, 1.1, eps, HALF) for eps in (1e-2, 1e-4, 1e-6)]
        errs = [abs(r - 1.0) for r in ratios]
        assert errs[1] <= errs[0] + 1e-7
        assert errs[2] <= errs[1] + 1e-7
        checked += 1


def test_expansion_ratio_rejects_bad_input():
    with pytest.raises(ValueError):
        expansion_ratio(LocalCoords(1, 1, 0, 0, 0), 0.0, 0.0, HALF)
    with pytest.raises(ValueError):
        expansion_ratio(LocalCoords(0, 0, 0, 0, 0), 0.0, 1e-3, HALF)


def test_localization_for_near_diametral_pair():
    p = embed(EquatorialCoords(0.2, 0.001, 0.01), HALF)
    q = embed(EquatorialCoords(0.2 + math.pi + 0.02, 0.002, -0.02), HALF)
    eps = 0.01
    assert deficit(p, q) <= eps
    ratios = localization_ratios(p, q, eps, HALF)
    assert all(r >= 0.0 for r in ratios)
    assert localization_check(p, q, eps, 8.0, HALF)
    with pytest.raises(ValueError):
        localization_ratios(p, q, deficit(p, q) / 2, HALF)


def test_contains_many_and_deficits_from():
    pts = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.5], [0.0, 0.0, 0.6]])
    assert contains_many(pts, HALF).tolist() == [True, True, True, False]
    d = deficits_from(pts[:3], 0)
    assert d[0] == 2.0
    assert d[1] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        deficits_from(pts, 9)


def test_localization_survey_on_sampled_near_diametral_pairs(caplog):
    pts = sample_parameter(RngStream(5, 0), 2000, HALF).points
    eps = 0.05
    pairs = []
    for i in range(len(pts) - 1):
        d = deficits_from(pts, i)
        for j in np.nonzero(d[i + 1:] <= eps)[0] + i + 1:
            pairs.append((Point3.from_array(pts[i]), Point3.from_array(pts[j])))
    assert len(pairs) >= 5
    with caplog.at_level("WARNING", logger="oblatus.geometry"):
        worst = localization_survey(pairs, eps, HALF)
    assert 0.0 < worst <= 8.0
    assert not caplog.records


def test_localization_survey_warns_when_constant_too_small(caplog):
    p = embed(EquatorialCoords(0.2, 0.001, 0.01), HALF)
    q = embed(EquatorialCoords(0.2 + math.pi + 0.02, 0.002, -0.02), HALF)
    far = (Point3(1.0, 0.0, 0.0), Point3(0.0, 1.0, 0.0))
    eps = deficit(p, q)
    with caplog.at_level("WARNING", logger="oblatus.geometry"):
        worst = localization_survey([(p, q), far], eps, HALF, C=1e-6)
    assert worst == max(localization_ratios(p, q, eps, HALF))
    assert any("max_ratio" in r.getMessage() for r in caplog.records)


def test_local_G_values():
    assert local_G(LocalCoords(0, 0, 0, 0, 0), HALF) == 0.0
    assert local_G(LocalCoords(2, 0, 0, 0, 0), ShapeParam(0.3)) == 1.0
    assert local_G(LocalCoords(1, 1, 1, -1, 0), HALF) == pytest.approx(0.75)
    assert local_G(LocalCoords(0, 0, 0, 0, 2), HALF) == pytest.approx(1.0)
    s, sp, y, yp, tau = (np.array([1.0, 0.2]), np.array([1.0, 0.4]), np.array([1.0, 0.3]),
                         np.array([-1.0, -0.1]), np.array([0.0, 0.5]))
    many = local_G_many(s, sp, y, yp, tau, HALF)
    for k in range(2):
        assert many[k] == pytest.approx(local_G(LocalCoords(s[k], sp[k], y[k], yp[k], tau[k]), HALF), rel=1e-15)


@pytest.mark.slow
@pytest.mark.parametrize("eps", [0.01, 0.003])
def test_localization_holds_for_simulated_near_diametral_pairs(eps):
    n = 200_000
    pts = sample_parameter(RngStream(31, 0), n, HALF).points
    near = count_near_diametral(pts, eps * n ** (4.0 / 7.0), HALF)
    pairs = [(Point3.from_array(pts[i]), Point3.from_array(pts[j])) for i, j in near.pairs]
    pairs = [(p, q) for p, q in pairs if deficit(p, q) <= eps]
    assert pairs
    assert all(localization_check(p, q, eps, 8.0, HALF) for p, q in pairs)
