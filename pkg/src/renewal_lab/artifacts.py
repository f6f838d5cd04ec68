"""Deterministic CSV/JSON writers and the run manifest."""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = "1.0"


def format_value(value: Any) -> str:
    """Floats at 17 significant digits; ints and strings as they are."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_table(path: Path, header: Sequence[str], columns: Sequence) -> None:
    """Write equally long columns as CSV."""
    columns = [np.asarray(c) for c in columns]
    lengths = {c.shape[0] for c in columns}
    if len(lengths) > 1:
        raise ValueError(f"columns of unequal length {sorted(lengths)}")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([format_value(v) for v in row])


def write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def to_jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def dumps(payload: Any) -> str:
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, payload: Any) -> None:
    path.write_text(dumps(payload), encoding="utf-8")


def canonical_hash(payload: Any) -> str:
    """sha256 of the compact sorted-key JSON of payload."""
    text = json.dumps(to_jsonable(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class Manifest:
    """Every artifact of one run, with the input hash and seed."""

    out_dir: Path
    task: str
    input_hash: str
    seed: int | None
    entries: list[dict[str, str]] = field(default_factory=list)

    def add(self, name: str, kind: str, schema: str = SCHEMA_VERSION) -> Path:
        """Reserve an output file name and list it."""
        self.entries.append({"file": name, "kind": kind, "schema_version": schema})
        return self.out_dir / name

    def write(self) -> Path:
        files = []
        for entry in sorted(self.entries, key=lambda e: e["file"]):
            path = self.out_dir / entry["file"]
            files.append({**entry, "sha256": file_hash(path)})
        payload = {
            "schema_version": SCHEMA_VERSION,
            "task": self.task,
            "input_sha256": self.input_hash,
            "seed": self.seed,
            "files": files,
        }
        path = self.out_dir / "manifest.json"
        write_json(path, payload)
        return path
