import numpy as np
import pytest

from renewal_lab.errors import ValidationFailure
from renewal_lab.sampling import WalkSampler, binomial_sigma, sum_groups


def test_explicit_frequencies(small_law):
    sampler = WalkSampler(small_law)
    draws = sampler.draw(np.random.default_rng(1), 50000)
    assert draws.min() >= -2 and draws.max() <= 2
    freq = np.bincount(draws + 2, minlength=5) / draws.size
    assert freq == pytest.approx(small_law.masses, abs=0.01)
    assert sampler.clipped == 0


def test_power_law_tail(power07):
    sampler = WalkSampler(power07)
    draws = sampler.draw(np.random.default_rng(2), 200000)
    check = sampler.tail_check(draws, [10.0, 100.0, 1000.0, 5000.0, 50000.0])
    assert check.max_z < 5.0
    assert np.any(draws > power07.i_max)


def test_symmetric_left_tail(symmetric12):
    sampler = WalkSampler(symmetric12)
    draws = sampler.draw(np.random.default_rng(3), 100000)
    assert np.any(draws < symmetric12.i_min)
    assert np.mean(draws > 0) == pytest.approx(np.mean(draws < 0), abs=0.01)


def test_nonpositive_side(small_law):
    sampler = WalkSampler(small_law, side="nonpositive")
    assert sampler.mass == pytest.approx(0.6)
    draws = sampler.draw(np.random.default_rng(4), 20000)
    assert draws.max() <= 0
    assert np.mean(draws == -2) == pytest.approx(0.5, abs=0.02)
    assert sampler.tail_check(draws, [-1.5, -0.5]).max_z < 5.0


def test_sampler_validation(power07):
    with pytest.raises(ValidationFailure) as info:
        WalkSampler(power07, side="left")
    assert info.value.field_path == "side"


def test_sum_groups():
    assert sum_groups(np.array([1, 2, 3, 4, 5]), np.array([2, 0, 3])).tolist() == [3, 0, 12]
    assert sum_groups(np.array([], dtype=np.int64), np.array([], dtype=np.int64)).size == 0


def test_binomial_sigma():
    assert binomial_sigma(0.5, 100) == pytest.approx(0.05)
    assert binomial_sigma(0.0, 10) == 0.0
    assert binomial_sigma(0.5, 0) == pytest.approx(0.5)
