from __future__ import annotations

import math

import numpy as np
import pytest

from oblatus.core.constants import weibull_distribution
from oblatus.core.models import LimitLaw
from oblatus.experiments.fitting import isotonic_in_x, ks_against_law, loglog_fit, loglog_interpolate, spread


def test_loglog_fit_recovers_power_law():
    x = np.array([0.02, 0.05, 0.1, 0.2])
    y = 3.0 * x**3.5
    slope, intercept = loglog_fit(x, y, std_errors=0.01 * y)
    assert slope == pytest.approx(3.5)
    assert intercept == pytest.approx(math.log(3.0))
    with pytest.raises(ValueError):
        loglog_fit([1.0], [1.0])
    with pytest.raises(ValueError):
        loglog_fit([1.0, 2.0], [0.0, 1.0])


def test_isotonic_in_x_restores_order():
    x = np.array([0.3, 0.1, 0.2])
    y = np.array([0.5, 0.3, 0.2])
    out = isotonic_in_x(x, y)
    order = np.argsort(x)
    assert np.all(np.diff(out[order]) >= 0.0)
    assert out[0] == 0.5
    assert out[1] == pytest.approx(0.25)


def test_loglog_interpolate():
    x = np.array([0.3, 0.1, 0.05])
    y = 2.0 * x**5.5
    assert loglog_interpolate(x, y, 0.07) == pytest.approx(2.0 * 0.07**5.5)
    assert np.allclose(loglog_interpolate(x, y, [0.05, 0.2]), 2.0 * np.array([0.05, 0.2]) ** 5.5)
    with pytest.raises(ValueError):
        loglog_interpolate(x, y, 0.01)
    with pytest.raises(ValueError):
        loglog_interpolate(x, y, 0.5)


def test_ks_against_law():
    law = LimitLaw(lambda_a=0.4, a=0.5)
    z = weibull_distribution(law).rvs(size=2000, random_state=np.random.default_rng(0))
    stat, pvalue = ks_against_law(z, law)
    assert stat < 0.05
    assert 0.0 <= pvalue <= 1.0
    wrong, _ = ks_against_law(z, LimitLaw(lambda_a=4.0, a=0.5))
    assert wrong > 0.3


def test_spread():
    assert spread([1.0, 2.0, 1.5]) == 2.0
    assert spread([0.0, 1.0]) == math.inf
