import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import zeta

from renewal_lab.distributions import (
    ExplicitSpec,
    PowerLawSpec,
    SequenceRule,
    build_distribution,
    make_explicit,
    make_power_law,
    make_williamson,
    unit_mass,
)
from renewal_lab.errors import OutOfSupport, ValidationFailure
from renewal_lab.regvar import power_function


def test_explicit_masses_must_sum_to_one():
    with pytest.raises(ValidationFailure) as e:
        make_explicit([0.5, 0.4])
    assert e.value.field_path == "masses"


def test_explicit_sublattice_is_rejected():
    with pytest.raises(ValidationFailure) as e:
        make_explicit([0.5, 0.0, 0.5])
    assert e.value.field_path == "h"
    # Same masses at -1 and 1 live on the full lattice
    coin = make_explicit([0.5, 0.0, 0.5], first_index=-1)
    assert coin.min_support_index == -1
    assert coin.max_support_index == 1


def test_explicit_offset_uses_differences():
    dist = make_explicit([0.5, 0.5], a=0.25, first_index=2)
    assert dist.position(2) == pytest.approx(2.25)
    assert dist.tail(2.25) == pytest.approx(0.5)


def test_offset_must_lie_below_span():
    with pytest.raises(ValidationError):
        ExplicitSpec(masses=[1.0], h=1.0, a=1.0)


def test_explicit_functionals(small_law):
    assert small_law.total_mass == pytest.approx(1.0)
    assert small_law.tail(0.0) == pytest.approx(0.4)
    assert small_law.cdf(-1.0) == pytest.approx(0.5)
    assert small_law.cell_mass(0.5) == pytest.approx(0.25)
    assert small_law.interval_mass(-2.5, 2.0) == pytest.approx(0.5)
    assert small_law.p_plus == pytest.approx(0.4)
    assert not small_law.is_one_sided
    assert small_law.can_decrease and small_law.can_increase


def test_omega_outside_support(small_law):
    with pytest.raises(OutOfSupport):
        small_law.omega(10.0)
    with pytest.raises(ValidationFailure):
        small_law.omega(0.0)


def test_power_law_window_masses(power07):
    C = power07.params["C"]
    assert C == pytest.approx(1.0 / zeta(1.7, 1.0))
    assert power07.mass_index(10) == pytest.approx(C * 10**-1.7, rel=1e-12)
    assert power07.tail(10.0) == pytest.approx(C * zeta(1.7, 11.0), rel=1e-9)
    assert power07.is_one_sided
    assert power07.total_mass == pytest.approx(1.0, abs=1e-12)


def test_power_law_tail_model_beyond_window(power07):
    ell = power07.right_tail
    for x in (2000.0, 4000.0, 1e6):
        assert power07.tail(x) * ell(x) == pytest.approx(1.0, rel=1e-10)


def test_tail_masses_telescope(power07):
    j = np.arange(power07.i_max + 1, power07.i_max + 5001)
    masses = power07.vector(int(j[0]), int(j[-1]))
    expected = power07.survival_index(power07.i_max) - power07.survival_index(int(j[-1]))
    assert masses.sum() == pytest.approx(expected, rel=1e-10)
    assert np.all(np.diff(masses) < 0.0)


def test_power_law_omega_tends_to_alpha(power07):
    assert power07.omega(1000.5) == pytest.approx(0.7, abs=0.01)


def test_power_law_window_too_short():
    with pytest.raises(ValidationFailure) as e:
        make_power_law(1.0, 0.0, 0.7, None, 100.0)
    assert e.value.field_path == "x_max"


def test_zero_mean_needs_finite_mean():
    with pytest.raises(ValidationFailure):
        make_power_law(1.0, 0.0, 0.9, None, 1e4, rho=0.5, zero_mean=True)


def test_two_sided_power_law(symmetric12):
    assert symmetric12.left_tail_ratio == 1.0
    assert symmetric12.measured_tail_ratio(100.0) == pytest.approx(1.0, rel=0.02)
    assert symmetric12.tail_mass_left == pytest.approx(symmetric12.tail_mass_right)
    assert symmetric12.cdf(-1e4) == pytest.approx(symmetric12.tail(1e4), rel=0.01)
    described = symmetric12.describe()
    assert described["kind"] == "power_law"
    assert described["left_tail_ratio"] == 1.0


def test_builder_matches_direct_construction(power07):
    built = build_distribution(PowerLawSpec(alpha=0.7, x_max=2000.0))
    assert np.array_equal(built.masses, power07.masses)
    assert built.tail_mass_right == power07.tail_mass_right


def test_explicit_builder_with_tail():
    ell = power_function(0.8, scale=100.0)
    spec = ExplicitSpec(masses=[0.2, 0.3, 0.4], first_index=1, right_tail=ell, tail_mass_right=0.1)
    dist = build_distribution(spec)
    assert dist.tail(3.0) == pytest.approx(0.1)
    assert dist.tail(30.0) == pytest.approx(0.1 * ell(3.0) / ell(30.0))


def test_unit_mass():
    dist = unit_mass(2.0, 3)
    assert dist.tail(5.9) == 1.0
    assert dist.tail(6.0) == 0.0


def test_spiked_law_spikes():
    dist = make_williamson(SequenceRule(), SequenceRule(), None, x_max=2.0**20)
    assert dist.total_mass == pytest.approx(1.0, abs=1e-9)
    assert dist.mass_index(1024) > 5.0 * dist.mass_index(1023)
    assert dist.mass_index(-1024) > 5.0 * dist.mass_index(-1023)
    # The cell just below a spike carries a large omega
    assert dist.omega(1023.5) > 5.0 * dist.omega(1000.5)
    assert dist.right_tail.alpha == 0.5


def test_spiked_law_needs_slowly_varying_g():
    with pytest.raises(ValidationFailure) as e:
        make_williamson(SequenceRule(), None, power_function(0.1), x_max=2.0**20)
    assert e.value.field_path == "g"
