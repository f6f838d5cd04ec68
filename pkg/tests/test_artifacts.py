import csv
import json
import math

import numpy as np
import pytest

from renewal_lab.artifacts import (
    Manifest,
    canonical_hash,
    file_hash,
    format_value,
    to_jsonable,
    write_json,
    write_rows,
    write_table,
)


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float64(1.5)) == "1.5"
    assert format_value(np.int64(7)) == "7"
    assert format_value(True) == "1"
    assert format_value("ok") == "ok"
    assert format_value(math.nan) == "nan"


def test_to_jsonable():
    payload = {"a": np.arange(3), "b": math.inf, "c": np.float32(0.5), "d": (np.bool_(True), None), 1: -math.inf}
    out = to_jsonable(payload)
    assert out == {"a": [0, 1, 2], "b": "inf", "c": 0.5, "d": [True, None], "1": "-inf"}
    json.dumps(out, allow_nan=False)


def test_canonical_hash_ignores_key_order():
    assert canonical_hash({"x": 1, "y": [1.0, 2.0]}) == canonical_hash({"y": [1.0, 2.0], "x": 1})
    assert canonical_hash({"x": 1}) != canonical_hash({"x": 2})


def test_write_table(tmp_path):
    path = tmp_path / "t.csv"
    write_table(path, ["x", "flag"], [np.array([1.0, 2.5]), ["ok", "exceeds"]])
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows == [["x", "flag"], ["1", "ok"], ["2.5", "exceeds"]]
    with pytest.raises(ValueError):
        write_table(path, ["x", "y"], [np.zeros(2), np.zeros(3)])


def test_manifest_lists_hashes(tmp_path):
    manifest = Manifest(out_dir=tmp_path, task="renewal-scan", input_hash="abc", seed=None)
    write_rows(manifest.add("b.csv", "table"), ["n"], [[1], [2]])
    write_json(manifest.add("a.json", "summary"), {"value": np.float64(0.25)})
    path = manifest.write()
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["task"] == "renewal-scan"
    assert payload["seed"] is None
    assert [entry["file"] for entry in payload["files"]] == ["a.json", "b.csv"]
    assert payload["files"][1]["sha256"] == file_hash(tmp_path / "b.csv")
    assert json.loads((tmp_path / "a.json").read_text(encoding="utf-8")) == {"value": 0.25}
