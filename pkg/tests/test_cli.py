import json

import pytest
from typer.testing import CliRunner

from renewal_lab.cli import EXIT_INVALID, app

runner = CliRunner()

SCAN = {
    "task": "renewal-scan",
    "distribution": {"kind": "explicit", "masses": [0.0, 0.5, 0.5]},
    "scan": {"x": {"values": [20, 40, 80]}, "window_log2": 8, "checkpoint": False},
}


@pytest.fixture
def spec_file(tmp_path):
    def write(payload):
        path = tmp_path / "job.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return write


def test_validate(spec_file):
    result = runner.invoke(app, ["validate", str(spec_file(SCAN))])
    assert result.exit_code == 0
    assert "Spec is valid!" in result.stdout
    assert "renewal-scan" in result.stdout


def test_validate_reports_field_path(spec_file):
    payload = {
        "task": "criteria",
        "distribution": {"kind": "power_law", "alpha": 0.4, "x_max": 1e5},
        "criteria": {"x": {"values": [10]}, "eta": 0.0},
    }
    result = runner.invoke(app, ["validate", str(spec_file(payload))])
    assert result.exit_code == EXIT_INVALID
    assert "criteria.eta" in result.stdout


def test_task_mismatch(spec_file, tmp_path):
    result = runner.invoke(app, ["ladder", "--spec", str(spec_file(SCAN)), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_INVALID
    assert not (tmp_path / "out").exists()


def test_bad_override_is_invalid(spec_file, tmp_path):
    payload = {**SCAN, "overrides": {"decay_ratio": 0.5}}
    result = runner.invoke(app, ["renewal-scan", "--spec", str(spec_file(payload)), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_INVALID
    assert "overrides.decay_ratio" in result.stdout


def test_renewal_scan_command(spec_file, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(app, ["renewal-scan", "--spec", str(spec_file(SCAN)), "--out", str(out), "--threads", "2"])
    assert result.exit_code == 0, result.stdout
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["task"] == "renewal-scan"
    assert (out / "renewal.csv").exists()
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["settings"]["threads"] == 2
