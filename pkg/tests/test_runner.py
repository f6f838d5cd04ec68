import json

import pytest

from renewal_lab.config import Settings
from renewal_lab.runner import TASKS, run_job
from renewal_lab.specs import parse_job

SCAN = {
    "task": "renewal-scan",
    "distribution": {"kind": "explicit", "masses": [0.0, 0.5, 0.5]},
    "scan": {"x": {"values": [20, 40, 80]}, "window_log2": 8, "checkpoint": False},
}


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_every_task_has_a_runner():
    assert set(TASKS) == {"renewal-scan", "small-n-table", "criteria", "lld-check", "ladder", "infdiv", "probe"}


def test_renewal_scan_artifacts(tmp_path):
    manifest = run_job(parse_job(SCAN), tmp_path, Settings())
    files = {entry["file"] for entry in manifest.entries}
    assert files == {"renewal.csv", "summary.json"}
    listed = read_json(tmp_path / "manifest.json")
    assert listed["task"] == "renewal-scan"
    assert listed["input_sha256"] == manifest.input_hash
    assert [f["file"] for f in listed["files"]] == ["renewal.csv", "summary.json"]
    summary = read_json(tmp_path / "summary.json")
    assert summary["task"] == "renewal-scan"
    assert summary["distribution"]["kind"] == "explicit"
    header = (tmp_path / "renewal.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("x,")
    assert not list(tmp_path.glob("*.checkpoint.bin"))


def test_renewal_scan_is_deterministic(tmp_path):
    job = parse_job(SCAN)
    run_job(job, tmp_path / "a", Settings())
    run_job(job, tmp_path / "b", Settings())
    assert (tmp_path / "a" / "renewal.csv").read_bytes() == (tmp_path / "b" / "renewal.csv").read_bytes()
    first = read_json(tmp_path / "a" / "manifest.json")
    second = read_json(tmp_path / "b" / "manifest.json")
    assert first["files"][0]["sha256"] == second["files"][0]["sha256"]


def test_criteria_report(tmp_path):
    job = parse_job(
        {
            "task": "criteria",
            "distribution": {"kind": "power_law", "alpha": 0.7, "x_max": 2000},
            "criteria": {"x": {"lo": 10, "hi": 1000, "points": 9}},
        }
    )
    run_job(job, tmp_path, Settings())
    report = read_json(tmp_path / "report.json")
    assert report["overall"] == "satisfied-on-range"
    assert report["records"][0]["name"] == "unconditional"
    assert read_json(tmp_path / "summary.json")["result"]["overall"] == "satisfied-on-range"


def test_seeded_probe_repeats(tmp_path):
    spec = {
        "task": "probe",
        "seed": 3,
        "distribution": {"kind": "power_law", "alpha": 0.7, "x_max": 2000},
        "probe": {"points": [{"n": 4, "k": 1, "x": 50}], "samples": 2000},
    }
    job = parse_job(spec)
    run_job(job, tmp_path / "a", Settings(chunk_size=256))
    run_job(job, tmp_path / "b", Settings(threads=2, chunk_size=256))
    first = (tmp_path / "a" / "probes.csv").read_bytes()
    assert first == (tmp_path / "b" / "probes.csv").read_bytes()
    assert read_json(tmp_path / "a" / "manifest.json")["seed"] == 3


@pytest.mark.slow
def test_small_n_table_artifacts(tmp_path):
    job = parse_job(
        {
            "task": "small-n-table",
            "distribution": {"kind": "power_law", "alpha": 0.4, "x_max": 1e5},
            "small_n": {"x": {"lo": 10, "hi": 1000, "points": 7}, "window_log2": 12},
        }
    )
    run_job(job, tmp_path, Settings())
    assert (tmp_path / "small_n.csv").exists()
