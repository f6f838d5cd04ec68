import math

import pytest

from renewal_lab.quadrature import integrate


def test_finite_interval():
    assert integrate(math.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-10)


def test_empty_interval():
    assert integrate(math.exp, 3.0, 3.0) == 0.0


def test_breakpoints():
    value = integrate(lambda t: abs(t - 0.3), 0.0, 1.0, points=[0.3])
    assert value == pytest.approx(0.5 * 0.09 + 0.5 * 0.49, rel=1e-10)


def test_fourier_weight_on_half_line():
    value = integrate(lambda t: math.exp(-t), 0.0, math.inf, weight="cos", wvar=1.0)
    assert value == pytest.approx(0.5, abs=1e-9)


def test_infinite_interval():
    value = integrate(lambda t: t ** -1.5, 1.0, math.inf)
    assert value == pytest.approx(2.0, rel=1e-8)
