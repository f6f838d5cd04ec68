import numpy as np
import pytest

from renewal_lab.config import Settings
from renewal_lab.distributions import make_explicit, make_power_law
from renewal_lab.engine import default_ell
from renewal_lab.errors import NotApplicable, ValidationFailure
from renewal_lab.fluctuation import (
    CompoundPoisson,
    ladder_srt_check,
    positivity_check,
    sample_ladder,
    tail_index,
    wiener_hopf_residual,
)
from renewal_lab.stable import ladder_srt_constant


@pytest.fixture(scope="module")
def coin_ladder(fair_coin):
    return sample_ladder(fair_coin, 4000, step_cap=256, seed=3, m=2, t_grid=[1, 2, 3], height_bins=64)


def test_coin_ladder_heights_are_one(coin_ladder):
    heights = coin_ladder.first_heights
    assert heights.size == coin_ladder.completed
    assert np.all(heights == 1)
    # P(tau+ > 256) is about 0.05 for the simple walk
    assert coin_ladder.f_plus_hat[1] == pytest.approx(0.95, abs=0.03)
    assert coin_ladder.f_plus_hat[2:].sum() == 0.0
    assert coin_ladder.v_plus[0][0] == pytest.approx(1.0)


def test_coin_wiener_hopf(fair_coin, coin_ladder):
    table = wiener_hopf_residual(fair_coin, coin_ladder)
    assert table.flag[0] != "exceeds"
    assert abs(table.z[0]) < 4.0
    assert table.flag[1:] == ["insufficient", "insufficient"]
    assert table.t.tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValidationFailure) as info:
        wiener_hopf_residual(fair_coin, coin_ladder, t_grid=[5])
    assert info.value.field_path == "t_grid"


def test_coin_sparre_andersen(coin_ladder):
    check = coin_ladder.sparre_andersen()
    assert abs(check["z"]) < 4.0
    assert check["sigma"] > 0.0


def test_wiener_hopf_on_drifting_law(small_law):
    ladder = sample_ladder(small_law, 3000, step_cap=128, seed=5, m=2, t_grid=[0, 1, 2], height_bins=32)
    table = wiener_hopf_residual(small_law, ladder)
    assert table.within() >= 0.5
    assert table.within(mirror=True) >= 0.5
    assert table.flag[0] == "insufficient"
    summary = ladder.summary()
    assert summary["paths"] == 3000
    assert 0.0 <= summary["censoring_fraction"] <= 1.0


def test_ladder_is_reproducible_across_threads(small_law):
    settings = Settings(chunk_size=200)
    one = sample_ladder(small_law, 1000, step_cap=64, seed=9, m=1, height_bins=16, settings=settings, threads=1)
    three = sample_ladder(small_law, 1000, step_cap=64, seed=9, m=1, height_bins=16, settings=settings, threads=3)
    assert np.array_equal(one.f_plus, three.f_plus)
    assert np.array_equal(one.v_minus_sum, three.v_minus_sum)


def test_sample_ladder_validation(fair_coin):
    shifted = make_explicit([0.5, 0.5], a=0.5, first_index=-1)
    with pytest.raises(ValidationFailure) as info:
        sample_ladder(shifted, 10, step_cap=8)
    assert info.value.field_path == "a"
    downward = make_explicit([0.5, 0.5], first_index=-1)
    with pytest.raises(ValidationFailure) as info:
        sample_ladder(downward, 10, step_cap=8)
    assert info.value.field_path == "base"
    for kwargs, field in [
        ({"paths": 0}, "paths"),
        ({"paths": 10, "step_cap": 1}, "step_cap"),
        ({"paths": 10, "m": 0}, "m"),
        ({"paths": 10, "t_grid": [-1]}, "t_grid"),
    ]:
        with pytest.raises(ValidationFailure) as info:
            sample_ladder(fair_coin, **{"step_cap": 8, **kwargs})
        assert info.value.field_path == field


def test_ladder_srt_needs_small_exponent(power07):
    ladder = sample_ladder(power07, 10, step_cap=8, seed=0, m=1, height_bins=16)
    with pytest.raises(NotApplicable):
        ladder_srt_check(power07, ladder, [10.0, 20.0])


def test_ladder_srt_on_two_sided_law():
    base = make_power_law(1.0, 0.0, 0.7, None, 4000.0, rho=1.0)
    ladder = sample_ladder(base, 2000, step_cap=128, seed=2, m=2, height_bins=256)
    srt = ladder_srt_check(base, ladder, [4.0, 8.0, 16.0, 32.0])
    assert srt.constant == pytest.approx(ladder_srt_constant(0.7, 0.5))
    assert srt.fit_based
    assert np.all(np.isfinite(srt.product))
    assert np.all(srt.v_minus_ratio >= 0.0)
    assert set(srt.summary()) >= {"constant", "within_3_band", "trend"}


def test_tail_index_needs_heights(power07):
    ladder = sample_ladder(power07, 20, step_cap=4, seed=0, m=1, height_bins=16)
    with pytest.raises(ValidationFailure) as info:
        tail_index(ladder)
    assert info.value.field_path == "ladder"


def test_positivity_of_symmetric_walk(symmetric12):
    check = positivity_check(symmetric12, 64, 4000, seed=4)
    assert check.varrho == pytest.approx(0.5)
    assert abs(check.z) < 4.0
    with pytest.raises(ValidationFailure):
        positivity_check(symmetric12, 0, 10, seed=4)


def test_compound_poisson_first_order(power07):
    walk = CompoundPoisson(power07, 0.1)
    assert walk.first_order_gap(-64, 64) <= 0.01
    law = walk.law(1, -64, 64)
    assert law.sum() <= 1.0 + 1e-12
    assert law[64] == pytest.approx(np.exp(-0.1), rel=1e-6)
    assert walk.ell(100.0) == pytest.approx(default_ell(power07)(100.0) / 0.1)
    assert walk.srt_constant() == pytest.approx(np.sin(0.7 * np.pi) / np.pi)


def test_compound_poisson_sampling(power07):
    walk = CompoundPoisson(power07, 0.5)
    rng = np.random.default_rng(0)
    draws = walk.sample(rng, 3, 20000)
    assert draws.min() >= 0
    # S_3 = 0 exactly when no jump happens in three steps
    assert np.mean(draws == 0) == pytest.approx(np.exp(-1.5), abs=0.02)


def test_compound_poisson_validation(power07):
    with pytest.raises(ValidationFailure) as info:
        CompoundPoisson(power07, 0.0)
    assert info.value.field_path == "mu"
    shifted = make_explicit([0.5, 0.5], a=0.5)
    with pytest.raises(ValidationFailure) as info:
        CompoundPoisson(shifted, 0.1)
    assert info.value.field_path == "nu.a"
    with pytest.raises(ValidationFailure) as info:
        CompoundPoisson(power07, 0.1, small=power07)
    assert info.value.field_path == "small"
