import math

import numpy as np
import pytest

from renewal_lab.checkpoint import CheckpointManager
from renewal_lab.config import Settings
from renewal_lab.distributions import make_power_law
from renewal_lab.engine import RenewalEngine, default_ell, fit_slope, llt_check
from renewal_lab.errors import ValidationFailure
from renewal_lab.regvar import RegVarFn
from renewal_lab.stable import limit_for

X = np.array([5.0, 10.0, 50.0, 200.0])


def hitting_probabilities(k_max):
    """u_k = P(the 1-or-2 walk visits k)."""
    u = np.zeros(k_max + 1)
    u[0], u[1] = 1.0, 0.5
    for k in range(2, k_max + 1):
        u[k] = 0.5 * u[k - 1] + 0.5 * u[k - 2]
    return u


def test_default_ell(step12, fair_coin, power07):
    ell = default_ell(step12)
    assert ell.alpha == 1.0
    assert ell(3.0) == pytest.approx(2.0)
    assert default_ell(power07) is power07.right_tail
    with pytest.raises(ValidationFailure):
        default_ell(fair_coin)


@pytest.mark.parametrize("interval", [32, 1])
def test_renewal_sums_match_hitting_recursion(step12, interval):
    engine = RenewalEngine(step12, X[-1], window_log2=9, settings=Settings(reprojection_interval=interval))
    scan = engine.renewal_scan(X, deltas=())
    expected = hitting_probabilities(201)[X.astype(int) + 1]
    assert np.allclose(scan.u, expected, atol=1e-12)
    assert scan.u_error == 0.0
    assert scan.flagged_steps == 0
    assert np.all(np.isnan(scan.remainder))
    assert scan.srt_constant is None


def test_small_n_sums_are_ordered(step12):
    engine = RenewalEngine(step12, X[-1], window_log2=9, settings=Settings())
    scan = engine.renewal_scan(X, deltas=(0.5, 0.25))
    assert np.all(scan.g[0.25] <= scan.g[0.5] + 1e-15)
    assert np.all(scan.g[0.5] <= scan.u + 1e-15)
    # Few powers reach x = 200 before n = 0.25 * 200 / 1.5
    assert scan.g[0.25][-1] == 0.0
    assert scan.n_seq == math.ceil(0.5 * 200.0 / 1.5)


def test_scan_validation(step12):
    engine = RenewalEngine(step12, 100.0, window_log2=4, settings=Settings())
    with pytest.raises(ValidationFailure):
        engine.renewal_scan([500.0], deltas=())
    with pytest.raises(ValidationFailure):
        engine.renewal_scan([50.0], deltas=(1.5,))
    with pytest.raises(ValidationFailure):
        engine.renewal_scan([0.0, 50.0], deltas=())


def test_checkpoint_resume_reproduces_the_scan(step12, tmp_path, monkeypatch):
    settings = Settings()
    reference = RenewalEngine(step12, X[-1], window_log2=9, settings=settings).renewal_scan(X, deltas=(0.5,))

    monkeypatch.setattr(CheckpointManager, "clean", lambda self: None)
    manager = CheckpointManager(tmp_path / "renewal.csv")
    first = RenewalEngine(step12, X[-1], window_log2=9, settings=settings)
    first.renewal_scan(X, deltas=(0.5,), checkpoint=manager, identity="job")
    assert manager.exists()

    second = RenewalEngine(step12, X[-1], window_log2=9, settings=settings)
    resumed = second.renewal_scan(X, deltas=(0.5,), checkpoint=manager, identity="job")
    assert resumed.resumed
    assert np.allclose(resumed.u, reference.u, rtol=1e-12, atol=1e-15)
    assert np.allclose(resumed.g[0.5], reference.g[0.5], rtol=1e-12, atol=1e-15)

    other = RenewalEngine(step12, X[-1], window_log2=9, settings=settings)
    fresh = other.renewal_scan(X, deltas=(0.5,), checkpoint=manager, identity="another job")
    assert not fresh.resumed


def test_checkpoint_is_removed_after_a_full_run(step12, tmp_path):
    manager = CheckpointManager(tmp_path / "renewal.csv")
    engine = RenewalEngine(step12, X[-1], window_log2=9, settings=Settings())
    engine.renewal_scan(X, deltas=(0.5,), checkpoint=manager, identity="job")
    assert not manager.exists()


def test_small_n_table(power07):
    engine = RenewalEngine(power07, 1000.0, window_log2=11, settings=Settings())
    table = engine.small_n_limit_table(np.geomspace(10.0, 1000.0, 9), deltas=(0.2, 0.1))
    assert table.values.shape == (2, 9)
    assert np.all(table.values[1] <= table.values[0] + 1e-15)
    assert table.floor == pytest.approx(table.top_decade_max.min())
    with pytest.raises(ValidationFailure):
        engine.small_n_limit_table([10.0], deltas=())


def test_lower_bound_is_nonnegative(power07):
    engine = RenewalEngine(power07, 1000.0, window_log2=11, settings=Settings())
    bound = engine.lower_bound_check((0.5, 2.0), 0.5, 1, 500.0)
    assert bound.lhs > 0.0
    assert bound.rhs >= 0.0
    assert bound.n_hi == math.ceil(power07.right_tail(250.0))
    with pytest.raises(ValidationFailure):
        engine.lower_bound_check((2.0, 0.5), 0.5, 1, 500.0)


def test_local_limit_at_half():
    law = make_power_law(1.0, 0.0, 0.5, None, 2e6)
    check = llt_check(law, 512, settings=Settings())
    assert check.x[0] == pytest.approx(0.2)
    assert check.x[-1] == pytest.approx(5.0)
    assert check.a_n > 1.0
    assert check.sup_diff <= 0.05


@pytest.mark.slow
def test_local_limit_gap_closes(power07):
    gaps = [llt_check(power07, n, settings=Settings()).sup_diff for n in (64, 512)]
    assert gaps[1] < gaps[0]


def test_integer_thresholds_are_exact(step12):
    engine = RenewalEngine(step12, 100.0, RegVarFn(alpha=1.0, scale=2.0), window_log2=8, settings=Settings())
    horizon = engine.thresholds(np.array([1.5, 3.0, 6.0]), [1.0])
    assert horizon.tolist() == [[3.0, 6.0, 12.0]]


def test_fit_slope():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert fit_slope(x, x**2) == pytest.approx(2.0)
    assert math.isnan(fit_slope(x, np.zeros(4)))


@pytest.mark.slow
def test_normalised_renewal_sum_approaches_the_constant(power07):
    engine = RenewalEngine(power07, 1000.0, window_log2=11, settings=Settings())
    x = np.geomspace(10.0, 1000.0, 21) + 0.5
    scan = engine.renewal_scan(x, deltas=(0.1,), limit=limit_for(power07))
    expected = math.sin(0.7 * math.pi) / math.pi
    assert scan.srt_constant == pytest.approx(expected, rel=1e-3)
    assert scan.normalized[-1] == pytest.approx(expected, rel=0.1)
    assert np.all(np.isfinite(scan.remainder))
