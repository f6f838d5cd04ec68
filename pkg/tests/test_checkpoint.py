import numpy as np
import pytest

from renewal_lab.checkpoint import CheckpointData, CheckpointManager, job_digest


@pytest.fixture
def state():
    return CheckpointData(
        job_digest=job_digest("job"),
        n=12,
        w_lo=-3,
        w_hi=4,
        power=np.linspace(0.0, 1.0, 8),
        power_error=1e-14,
        u=np.array([0.5, 0.25]),
        u_error=2e-14,
        g=np.arange(6, dtype=float).reshape(3, 2),
        flagged_steps=1,
        first_flagged=7,
        clamp_total=1e-18,
        clamp_count=3,
        clamp_large=0,
    )


def test_round_trip(tmp_path, state):
    manager = CheckpointManager(tmp_path / "renewal.csv")
    assert manager.checkpoint_path.name == "renewal.checkpoint.bin"
    assert manager.load() is None
    manager.save(state)
    loaded = manager.load(job_digest("job"))
    assert loaded.n == 12
    assert (loaded.w_lo, loaded.w_hi) == (-3, 4)
    assert np.array_equal(loaded.power, state.power)
    assert np.array_equal(loaded.g, state.g)
    assert loaded.first_flagged == 7
    assert loaded.clamp_total == state.clamp_total


def test_foreign_or_damaged_checkpoint_is_ignored(tmp_path, state):
    manager = CheckpointManager(tmp_path / "renewal.csv")
    manager.save(state)
    assert manager.load(job_digest("other job")) is None
    raw = manager.checkpoint_path.read_bytes()
    manager.checkpoint_path.write_bytes(raw[:-8])
    assert manager.load() is None
    manager.checkpoint_path.write_bytes(b"XXXX" + raw[4:])
    assert manager.load() is None


def test_clean(tmp_path, state):
    manager = CheckpointManager(tmp_path / "renewal.csv")
    manager.save(state)
    assert manager.exists()
    manager.clean()
    assert not manager.exists()
    manager.clean()
    assert list(tmp_path.iterdir()) == []
