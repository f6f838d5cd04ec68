import math

import numpy as np
import pytest

from renewal_lab.errors import ValidationFailure
from renewal_lab.stable import (
    ladder_srt_constant,
    limit_for,
    positivity,
    srt_constant,
    stable_limit,
)


@pytest.mark.parametrize(
    "alpha, rho, expected",
    [(0.5, 0.0, 1.0), (0.5, 1.0, 0.5), (1.5, 0.0, 1.0 / 3.0), (1.0, 1.0, 0.5), (1.2, 1.0, 0.5)],
)
def test_positivity(alpha, rho, expected):
    assert positivity(alpha, rho) == pytest.approx(expected)


def test_positivity_at_one_needs_symmetry():
    with pytest.raises(ValidationFailure):
        positivity(1.0, 0.0)


@pytest.mark.parametrize("alpha", [0.5, 0.7])
def test_one_sided_srt_constant(alpha):
    expected = math.sin(math.pi * alpha) / math.pi
    assert srt_constant(stable_limit(alpha), h=1.0) == pytest.approx(expected, rel=1e-3)
    assert srt_constant(stable_limit(alpha), h=2.0) == pytest.approx(2.0 * expected, rel=1e-3)


def test_ladder_srt_constant():
    assert ladder_srt_constant(0.8, 0.5) == pytest.approx(math.sin(0.4 * math.pi) / math.pi)
    with pytest.raises(ValidationFailure):
        ladder_srt_constant(0.7, 1.0)


@pytest.mark.parametrize("x", [-1.0, 0.5, 1.0, 3.0])
def test_characteristic_function_inversion_matches_pdf(x):
    lim = stable_limit(0.7)
    assert lim.cf_density(x) == pytest.approx(lim.density(x), abs=1e-4)


def test_two_sided_density_inversion():
    lim = stable_limit(0.6, rho_tail=0.5)
    for x in (-2.0, 0.0, 1.5):
        assert lim.cf_density(x) == pytest.approx(lim.density(x), abs=1e-4)


def test_density_normalisation():
    lim = stable_limit(0.7)
    assert lim.total_mass() == pytest.approx(1.0, rel=1e-3)
    assert lim.tail_normalisation(1e3) == pytest.approx(1.0, rel=0.03)


def test_spline_density_matches_exact():
    lim = stable_limit(0.7)
    x = np.linspace(0.1, 10.0, 37)
    assert np.allclose(lim.density_fast(x), lim.density(x), atol=1e-6)


def test_densities_need_alpha_below_one():
    with pytest.raises(ValidationFailure):
        stable_limit(1.2, 1.0).density(0.5)


def test_limit_for_laws(power07, symmetric12, step12):
    assert limit_for(power07).varrho == pytest.approx(1.0)
    assert limit_for(symmetric12).varrho == pytest.approx(0.5)
    assert "scale" not in limit_for(symmetric12).describe()
    with pytest.raises(ValidationFailure):
        limit_for(step12)
