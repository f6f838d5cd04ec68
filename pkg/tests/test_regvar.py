import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renewal_lab.errors import ValidationFailure
from renewal_lab.regvar import (
    LogFactor,
    NormingSeq,
    RegVarFn,
    karamata_k,
    karamata_u,
    potter_scan,
    power_function,
    snap_integers,
    truncated_moment,
)

LOGGY = RegVarFn(
    alpha=0.6,
    scale=1.7,
    log_factors=(LogFactor(order=1, power=-0.5), LogFactor(order=2, power=1.0)),
    floor=20.0,
)


@given(
    st.floats(min_value=0.05, max_value=2.0),
    st.floats(min_value=2.0, max_value=1e8),
)
def test_invert_undoes_power_function(alpha, x):
    f = power_function(alpha, scale=0.3)
    assert f.invert(f(x)) == pytest.approx(x, rel=1e-8)


@given(st.floats(min_value=25.0, max_value=1e12))
def test_invert_undoes_log_corrected_function(x):
    assert LOGGY.invert(LOGGY(x)) == pytest.approx(x, rel=1e-8)


def test_invert_below_first_value_is_one():
    f = power_function(1.0, scale=5.0)
    assert f.invert(2.0) == 1.0


def test_invert_rejects_slowly_varying():
    with pytest.raises(ValidationFailure):
        RegVarFn(alpha=0.0).invert(3.0)


def test_invert_array_matches_scalar_inverse():
    targets = [1.5, 10.0, 1e3, 1e6]
    fast = LOGGY.invert_array(targets)
    for t, value in zip(targets, fast):
        assert value == pytest.approx(LOGGY.invert(t), rel=1e-10)


@pytest.mark.parametrize("x", [30.0, 1e3, 1e6, 1e15])
def test_log_derivative_matches_numerical_derivative(x):
    def log_f(t):
        return (
            mpmath.log(1.7)
            + 0.6 * mpmath.log(t)
            - 0.5 * mpmath.log(mpmath.log(t))
            + mpmath.log(mpmath.log(mpmath.log(t)))
        )

    with mpmath.workdps(40):
        expected = float(x * mpmath.diff(log_f, mpmath.mpf(x)))
    assert LOGGY.log_derivative(x) == pytest.approx(expected, rel=1e-9)


def test_integer_valued_function_snaps_to_integer():
    cutoff = RegVarFn(alpha=0.0, scale=3.0)
    raw = cutoff([50.0, 100.0, 200.0])
    snapped = snap_integers(raw)
    assert snapped.tolist() == [3.0, 3.0, 3.0]
    assert math.ceil(snap_integers(float(cutoff(100.0)))) - 1 == 2
    assert snap_integers(2.5) == 2.5
    assert snap_integers(1e6 + 1e-3) == 1e6 + 1e-3


def test_log_derivative_is_flat_below_floor():
    assert LOGGY.log_derivative(5.0) == 0.0
    assert LOGGY(5.0) == LOGGY(20.0)


def test_log_factor_needs_a_floor_above_its_zero():
    with pytest.raises(ValueError):
        RegVarFn(alpha=0.5, log_factors=(LogFactor(order=2, power=1.0),), floor=2.0)


def test_non_monotone_function_is_rejected():
    with pytest.raises(ValueError):
        RegVarFn(alpha=0.5, log_factors=(LogFactor(order=1, power=-1.0),), floor=3.0)


def test_product_and_power_add_exponents():
    f = power_function(0.5, scale=2.0) * LOGGY
    assert f.alpha == pytest.approx(1.1)
    assert f(1e4) == pytest.approx(2.0 * 100.0 * LOGGY(1e4))
    g = LOGGY**2
    assert g(1e5) == pytest.approx(LOGGY(1e5) ** 2)


def test_norming_sequence_of_square_root():
    seq = NormingSeq(power_function(0.5))
    assert seq(0) == 1.0
    assert seq(1) == 1.0
    assert seq(10) == pytest.approx(100.0)
    assert list(seq.array([4, 5])) == pytest.approx([16.0, 25.0])


def test_karamata_u_of_power_function():
    ell = power_function(0.7, scale=2.0)
    x = 1e5
    expected = 4.0 * (x**0.4 - 1.0) / 0.4
    assert karamata_u(ell, x) == pytest.approx(expected, rel=1e-7)


def test_karamata_u_with_clamped_log_factor():
    ell = RegVarFn(alpha=0.5, log_factors=(LogFactor(order=1, power=-1.0),), floor=8.0)
    x = 1e7

    def integrand(s):
        t = max(s, 8)
        return t / mpmath.log(t) ** 2 / s**2

    expected = float(mpmath.quad(integrand, [1, 8, 1e3, x]))
    assert karamata_u(ell, x) == pytest.approx(expected, rel=1e-6)
    assert karamata_u(ell, x) == pytest.approx(7.0 / math.log(8.0) ** 2 + 1.0 / math.log(8.0) - 1.0 / math.log(x), rel=1e-6)


def test_karamata_u_domain():
    with pytest.raises(ValidationFailure):
        karamata_u(power_function(0.5), 0.5)
    assert karamata_u(power_function(0.5), 1.0) == 0.0
    assert karamata_k(power_function(0.5), 1.0) == math.inf


def test_potter_scan_of_pure_power():
    bound = potter_scan(power_function(0.7), eps=0.1)
    assert bound.threshold == 1.0
    assert bound.constant == 1.0


def test_potter_scan_constant_is_within_target():
    bound = potter_scan(LOGGY, eps=0.05, target=1.5)
    assert bound.constant <= 1.5
    assert bound.threshold >= LOGGY.floor


def test_truncated_moment_against_karamata(power07):
    moment = truncated_moment(power07, 1, 1000.0)
    assert moment.value > 0.0
    # E[X; 0 < X <= s] ~ alpha/(1-alpha) s/ell(s)
    assert moment.karamata_ratio == pytest.approx(1.0, rel=0.2)
    assert truncated_moment(power07, 0, 10.0).value == pytest.approx(
        power07.tail(0.0) - power07.tail(10.0)
    )
    with pytest.raises(ValidationFailure):
        truncated_moment(power07, 1, 0.0)
