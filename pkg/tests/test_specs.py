import json

import pytest

from renewal_lab.artifacts import canonical_hash
from renewal_lab.config import Settings, get_settings
from renewal_lab.errors import ValidationFailure
from renewal_lab.specs import GridSpec, load_job, parse_job

LAW = {"kind": "explicit", "masses": [0.0, 0.5, 0.5]}


def scan_job(**extra):
    return {"task": "renewal-scan", "distribution": LAW, "scan": {"x": {"values": [20, 40, 80]}}, **extra}


def field_of(payload):
    with pytest.raises(ValidationFailure) as info:
        parse_job(payload)
    return info.value.field_path


def test_parse_scan_job():
    job = parse_job(scan_job())
    assert job.task == "renewal-scan"
    assert not job.stochastic
    assert job.block is job.scan
    assert job.scan.x.array().tolist() == [20.0, 40.0, 80.0]


def test_field_paths():
    assert field_of({"task": "renewal-scan", "distribution": LAW}) == "scan"
    assert field_of({"task": "criteria", "distribution": LAW, "criteria": {"x": {"values": [10]}, "eta": 0.0}}) == "criteria.eta"
    assert field_of({"task": "ladder", "distribution": LAW, "ladder": {"paths": 10}}) == "seed"
    assert field_of(scan_job(overrides={"foo": 1})) == "overrides.foo"
    bad = scan_job()
    bad["scan"]["bogus"] = 1
    assert field_of(bad) == "scan.bogus"
    assert field_of({**scan_job(), "distribution": {"kind": "explicit", "masses": [-1.0, 2.0]}}).startswith("distribution")


def test_lambda_alias():
    job = parse_job(
        {
            "task": "lld-check",
            "distribution": LAW,
            "seed": 1,
            "lld": {"n": [2], "s": [1.0], "x": [5.0], "lambda": {"n_lo": 1, "n_hi": 4, "samples": 10}},
        }
    )
    assert job.lld.lambda_.n_hi == 4
    assert job.stochastic
    assert "lambda" in job.canonical()["lld"]


def test_settings_overrides():
    job = parse_job(scan_job(overrides={"decay_ratio": 8.0}))
    settings = job.settings(Settings(), threads=3, budget_mb=None)
    assert settings.decay_ratio == 8.0
    assert settings.threads == 3
    base = Settings()
    assert parse_job(scan_job()).settings(base) is base
    job = parse_job(scan_job(overrides={"decay_ratio": 0.5}))
    with pytest.raises(ValidationFailure) as info:
        job.settings(Settings())
    assert info.value.field_path == "overrides.decay_ratio"


def test_grid_spec():
    assert GridSpec(lo=10.0, hi=1000.0, points=3).array() == pytest.approx([10.0, 100.0, 1000.0])
    assert GridSpec(lo=1.0, hi=3.0, points=3, geometric=False).array().tolist() == [1.0, 2.0, 3.0]
    assert GridSpec(values=[3.0, 1.0]).array().tolist() == [1.0, 3.0]
    for kwargs in ({"lo": 1.0}, {"lo": 5.0, "hi": 1.0}, {"values": [0.0]}, {"values": []}):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)


def test_canonical_hash_is_stable():
    a = parse_job(scan_job(seed=4))
    b = parse_job(json.dumps({"seed": 4, **scan_job()}))
    assert canonical_hash(a.canonical()) == canonical_hash(b.canonical())
    c = parse_job(scan_job(seed=5))
    assert canonical_hash(a.canonical()) != canonical_hash(c.canonical())


def test_load_job(tmp_path):
    path = tmp_path / "job.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValidationFailure) as info:
        load_job(path)
    assert info.value.field_path == "spec"
    with pytest.raises(ValidationFailure) as info:
        load_job(tmp_path / "missing.json")
    assert info.value.field_path == "spec"
    path.write_text(json.dumps(scan_job()), encoding="utf-8")
    assert load_job(path).task == "renewal-scan"


def test_settings_follow_the_environment(monkeypatch):
    monkeypatch.setenv("RENEWAL_LAB_THREADS", "5")
    assert get_settings().threads == 5
    monkeypatch.setenv("RENEWAL_LAB_THREADS", "2")
    assert get_settings().threads == 2
