import numpy as np
import pytest

from renewal_lab.config import Settings
from renewal_lab.trend import bounded_verdict, combine, decay_verdict, loglog_slope

X = np.geomspace(1.0, 1e4, 41)


def test_power_decay_is_satisfied():
    verdict = decay_verdict(X, X**-0.5 * 10.0)
    assert verdict.verdict == "satisfied-on-range"
    assert verdict.slope == pytest.approx(-0.5)


def test_constant_does_not_decay():
    verdict = decay_verdict(X, np.full(X.size, 0.3))
    assert verdict.verdict == "violated"


def test_short_grid_is_inconclusive():
    x = np.geomspace(10.0, 500.0, 9)
    assert decay_verdict(x, 1.0 / x).verdict == "inconclusive"
    assert bounded_verdict(x, x).verdict == "inconclusive"


def test_zero_trajectory_decays():
    verdict = decay_verdict(X, np.zeros(X.size))
    assert verdict.verdict == "satisfied-on-range"
    assert verdict.note == "identically zero"


def test_negligible_tail_counts_as_decay():
    values = np.where(X < 100.0, 0.5, 1e-4)
    assert decay_verdict(X, values).verdict == "satisfied-on-range"


def test_decay_thresholds_come_from_settings():
    values = X**-0.02
    assert decay_verdict(X, values).verdict == "violated"
    loose = Settings(decay_ratio=1.1, decay_slope=-0.01)
    assert decay_verdict(X, values, loose).verdict == "satisfied-on-range"


def test_growth_is_unbounded():
    assert bounded_verdict(X, X**0.5).verdict == "violated"


def test_oscillation_is_bounded():
    values = 1.0 + 0.2 * np.sin(np.log(X))
    verdict = bounded_verdict(X, values)
    assert verdict.verdict == "satisfied-on-range"
    assert verdict.reference == pytest.approx(np.median(values))


def test_nan_entries_are_ignored():
    values = X**-0.5
    values[3] = np.nan
    assert decay_verdict(X, values).verdict == "satisfied-on-range"


def test_combine():
    assert combine(["satisfied-on-range", "satisfied-on-range"]) == "satisfied-on-range"
    assert combine(["satisfied-on-range", "inconclusive"]) == "inconclusive"
    assert combine(["inconclusive", "violated"]) == "violated"


def test_loglog_slope_needs_three_points():
    assert np.isnan(loglog_slope(np.array([1.0, 2.0]), np.array([1.0, 2.0])))
    assert loglog_slope(X, 3.0 * X**1.5) == pytest.approx(1.5)
