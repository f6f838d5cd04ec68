import numpy as np
import pytest

from renewal_lab.config import Settings
from renewal_lab.convolution import (
    ClampLedger,
    ConvPowerSet,
    fft_convolve,
    naive_power,
    window_bounds,
)
from renewal_lab.distributions import make_explicit
from renewal_lab.errors import BudgetExceeded, ValidationFailure

MASSES = [0.2, 0.1, 0.3, 0.4]


@pytest.fixture(scope="module")
def four_point():
    return make_explicit(MASSES, first_index=-1)


def test_fft_convolve_matches_numpy():
    rng = np.random.default_rng(3)
    x, y = rng.random(37), rng.random(12)
    assert np.allclose(fft_convolve(x, y), np.convolve(x, y), atol=1e-13)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 17, 32, 64])
def test_conv_power_matches_direct_convolution(four_point, n):
    powers = ConvPowerSet(four_point, -200, 200, Settings())
    vec = powers.conv_power(n)
    exact = naive_power(np.asarray(MASSES), n)
    indices = np.arange(-n, 2 * n + 1)
    assert np.allclose(vec.at(indices), exact, atol=1e-12)
    assert vec.error == 0.0
    assert not vec.flagged
    assert vec.at(2 * n + 1) == 0.0


def test_stepping_agrees_with_doubling(four_point):
    powers = ConvPowerSet(four_point, -100, 100, Settings())
    vec = powers.unit()
    for _ in range(13):
        vec = powers.step(vec)
    assert vec.n == 13
    assert np.allclose(vec.values, powers.conv_power(13).values, atol=1e-14)


def test_one_sided_powers_are_exact_on_window(power07):
    powers = ConvPowerSet(power07, 0, 256, Settings())
    vec = powers.conv_power(5)
    exact = naive_power(power07.vector(0, 256), 5)[:257]
    assert np.allclose(vec.values, exact, atol=1e-14)
    assert vec.error == 0.0
    assert vec.lost_mass > 0.0


def test_two_sided_truncation_is_flagged(symmetric12):
    powers = ConvPowerSet(symmetric12, -64, 64, Settings())
    vec = powers.conv_power(8)
    assert vec.error > 0.0
    assert vec.flagged


def test_window_must_contain_origin(four_point):
    with pytest.raises(ValidationFailure) as e:
        ConvPowerSet(four_point, 1, 10, Settings())
    assert e.value.field_path == "window"
    with pytest.raises(ValidationFailure):
        ConvPowerSet(four_point, 5, -5, Settings())


def test_memory_budget(four_point):
    with pytest.raises(BudgetExceeded) as e:
        ConvPowerSet(four_point, -10_000, 10_000, Settings(budget_mb=1.0))
    assert e.value.ledger == "memory"


def test_clamp_ledger_books_negatives():
    ledger = ClampLedger(threshold=1e-15, budget=1e-9)
    values = np.array([1.0, -1e-10, 0.5, -2e-16])
    ledger.record(values)
    assert np.all(values >= 0.0)
    assert ledger.total == pytest.approx(1e-10 + 2e-16)
    assert ledger.count == 2
    assert ledger.large == 1
    with pytest.raises(BudgetExceeded) as e:
        ledger.record(np.array([-2e-9]))
    assert e.value.ledger == "clamp"


def test_window_bounds(four_point, power07):
    assert window_bounds(four_point, 300, Settings(), 8) == (-300, 300)
    assert window_bounds(power07, 100, Settings(), 8) == (0, 256)
    assert window_bounds(power07, 1000, Settings(), 8) == (0, 1000)
