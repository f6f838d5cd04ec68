import hypothesis
import numpy as np
import pytest

from renewal_lab.distributions import make_explicit, make_power_law

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)


@pytest.fixture(scope="session")
def power07():
    """One-sided power law with alpha = 0.7 on Z."""
    return make_power_law(1.0, 0.0, 0.7, None, 2000.0)


@pytest.fixture(scope="session")
def power05():
    return make_power_law(1.0, 0.0, 0.5, None, 2e4)


@pytest.fixture(scope="session")
def power04():
    return make_power_law(1.0, 0.0, 0.4, None, 1e5)


@pytest.fixture(scope="session")
def symmetric12():
    """Two-sided power law with alpha = 1.2 and equal tails."""
    return make_power_law(1.0, 0.0, 1.2, None, 500.0, rho=1.0)


@pytest.fixture(scope="session")
def fair_coin():
    return make_explicit([0.5, 0.0, 0.5], first_index=-1)


@pytest.fixture(scope="session")
def small_law():
    """Finite law on {-2, ..., 2} with negative drift."""
    return make_explicit([0.3, 0.2, 0.1, 0.25, 0.15], first_index=-2)


@pytest.fixture(scope="session")
def step12():
    """Steps of 1 or 2 with equal probability."""
    return make_explicit([0.0, 0.5, 0.5])
