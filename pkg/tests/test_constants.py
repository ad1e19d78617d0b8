from __future__ import annotations

import math

import numpy as np
import pytest

from oblatus.core import constants
from oblatus.core.constants import (
    bounding_box,
    i_a_mc5d,
    i_a_reduced3d,
    lambda_a,
    limit_law_from_estimates,
    median_rescaled,
    reduced_integrand,
    t_for_mean,
    weibull_distribution,
    weibull_quantile,
    weibull_survival,
)
from oblatus.core.engine import ReplicationEngine
from oblatus.core.models import LimitLaw, ShapeParam
from oblatus.core.rng import RngStream

HALF = ShapeParam(0.5)


def volume_oracle(a: float) -> float:
    # one-dimensional reduction of the sublevel volume, used only to check the estimators
    return 256.0 * math.pi / (105.0 * math.sqrt(1.0 - a * a))


def test_lambda_identities():
    assert lambda_a(64 * math.pi / 9).lambda_a == pytest.approx(1.0)
    assert lambda_a(1.0).lambda_a == pytest.approx(0.04476, abs=1e-5)
    law = lambda_a(3.7)
    assert law.k_a / law.lambda_a == 2.0
    with pytest.raises(ValueError):
        lambda_a(0.0)
    with pytest.raises(ValueError):
        lambda_a(-1.0)


def test_weibull_survival_values():
    unit = LimitLaw(lambda_a=1.0, a=0.5)
    assert weibull_survival(0.0, unit) == 1.0
    assert weibull_survival(1.0, unit) == pytest.approx(math.exp(-1.0))
    assert weibull_survival(2.0, unit) == pytest.approx(math.exp(-(2.0**3.5)), rel=1e-12)
    assert weibull_survival(2.0, unit) == pytest.approx(1.2204e-5, rel=1e-3)
    with pytest.raises(ValueError):
        weibull_survival(-0.1, unit)


def test_weibull_survival_shape():
    law = LimitLaw(lambda_a=0.4, a=0.5)
    t = np.linspace(0.0, 4.0, 200)
    s = weibull_survival(t, law)
    assert np.all(np.diff(s) < 0.0)
    assert np.all((s > 0.0) & (s <= 1.0))
    assert np.allclose(np.log(s[1:]), -0.4 * t[1:] ** 3.5, rtol=1e-9, atol=0.0)
    assert np.allclose(weibull_distribution(law).sf(t), s, rtol=1e-10, atol=1e-300)


def test_quantiles_and_median():
    law = LimitLaw(lambda_a=0.4, a=0.5)
    m = median_rescaled(law)
    assert weibull_survival(m, law) == pytest.approx(0.5)
    assert weibull_quantile(0.5, law) == pytest.approx(m)
    assert law.lambda_a * t_for_mean(1.0, law) ** 3.5 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        weibull_quantile(1.0, law)


def test_reduced_integrand_at_origin():
    for a in (0.1, 0.5, 0.9):
        assert reduced_integrand(0.0, 0.0, 0.0, ShapeParam(a)) == 2.0


def test_bounding_box():
    box = bounding_box(HALF)
    assert box.s_max == pytest.approx(8.0 / 3.0)
    assert box.y_max == pytest.approx(math.sqrt(8.0 / 3.0))
    assert box.t_max == pytest.approx(math.sqrt(4.0 + 8.0 / 3.0))


def test_reduced3d_close_to_oracle():
    est = i_a_reduced3d(HALF, grid=64)
    assert est.method == "reduced3d"
    assert est.std_error == 0.0
    assert est.value == pytest.approx(volume_oracle(0.5), rel=1e-2)
    assert 0.0 < est.error_estimate < 0.01 * est.value


def test_reduced3d_near_zero_a():
    est = i_a_reduced3d(ShapeParam(0.01), grid=64)
    assert est.value == pytest.approx(256.0 * math.pi / 105.0, rel=1e-2)


def test_reduced3d_monotone_in_a():
    vals = [i_a_reduced3d(ShapeParam(a), grid=32).value for a in (0.2, 0.5, 0.8)]
    assert vals[0] < vals[1] < vals[2]


def test_mc5d_agrees_with_quadrature():
    mc = i_a_mc5d(HALF, 400_000, RngStream(1, 0), chunk=100_000)
    quad = i_a_reduced3d(HALF, grid=64)
    assert mc.shell_hits == 0
    assert mc.std_error > 0.0
    assert abs(mc.value - volume_oracle(0.5)) <= 5 * mc.std_error
    cert = limit_law_from_estimates(mc, quad, sigmas=5.0)
    assert cert.agree
    assert cert.law.lambda_a == pytest.approx(9 * quad.value / (64 * math.pi))


def test_mc5d_is_reproducible_and_worker_invariant():
    a = i_a_mc5d(HALF, 50_000, RngStream(4, 0), chunk=10_000)
    b = i_a_mc5d(HALF, 50_000, RngStream(4, 0), chunk=10_000)
    with ReplicationEngine(2) as engine:
        c = i_a_mc5d(HALF, 50_000, RngStream(4, 0), chunk=10_000, engine=engine)
    assert a == b == c


def test_mc5d_std_error_scaling():
    small = i_a_mc5d(HALF, 200_000, RngStream(2, 0), chunk=100_000)
    large = i_a_mc5d(HALF, 400_000, RngStream(2, 1), chunk=100_000)
    assert small.std_error / large.std_error == pytest.approx(math.sqrt(2.0), rel=0.1)


def test_constant_errors():
    with pytest.raises(ValueError):
        i_a_mc5d(ShapeParam(0.97), 1000, RngStream(1, 0))
    with pytest.raises(ValueError):
        i_a_mc5d(HALF, 0, RngStream(1, 0))
    with pytest.raises(ValueError):
        i_a_reduced3d(HALF, grid=30)
    with pytest.raises(ValueError):
        i_a_reduced3d(ShapeParam(1.0), grid=32)
    with pytest.raises(ValueError):
        constants.estimate(HALF, "mc5d", 100)
    with pytest.raises(ValueError):
        constants.estimate(HALF, "simpson", 100)


@pytest.mark.slow
@pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
def test_route_agreement_full_budget(a):
    shape = ShapeParam(a)
    with ReplicationEngine(8) as engine:
        mc = i_a_mc5d(shape, 100_000_000, RngStream(42, 0), engine=engine)
        quad = i_a_reduced3d(shape, grid=400, engine=engine)
    cert = limit_law_from_estimates(mc, quad)
    assert cert.agree
    assert mc.shell_hits == 0
