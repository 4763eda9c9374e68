"""Output artifacts: JSON reports and CSV tables, each carrying a manifest.

JSON artifacts are {"manifest": ..., "result": ...}. CSV artifacts start with one
comment line "# manifest <json>", then the header row.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from importlib import metadata
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
PACKAGE = "artifact"
_CSV_PREFIX = "# manifest "


class SchemaMismatchError(ValueError):
    """Two artifacts (or an artifact and the reader) disagree on the schema version."""


def code_version() -> str:
    try:
        return metadata.version(PACKAGE)
    except metadata.PackageNotFoundError:
        return "unknown"


def manifest(subcommand: str, config: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": code_version(),
        "subcommand": subcommand,
        "config": to_jsonable(config),
    }


def to_jsonable(obj):
    """Plain JSON types from dataclasses, numpy values, tuples and non-finite floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
        for name in ("passed", "verdict"):
            if hasattr(type(obj), name) and isinstance(getattr(type(obj), name), property):
                out[name] = to_jsonable(getattr(obj, name))
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def dumps(man: dict, result) -> str:
    return json.dumps({"manifest": man, "result": to_jsonable(result)}, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, man: dict, result) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(man, result))
    return path


def csv_text(man: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write(_CSV_PREFIX + json.dumps(man, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, man: dict, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(man, header, rows))
    return path


def _check_schema(man: dict, path) -> dict:
    if man.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatchError(f"{path}: schema version {man.get('schema_version')} != {SCHEMA_VERSION}")
    return man


def load_json(path: str | Path) -> tuple[dict, object]:
    data = json.loads(Path(path).read_text())
    return _check_schema(data["manifest"], path), data["result"]


def load_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(_CSV_PREFIX):
        raise SchemaMismatchError(f"{path}: missing manifest line")
    man = _check_schema(json.loads(lines[0][len(_CSV_PREFIX) :]), path)
    rows = list(csv.reader(lines[1:]))
    return man, rows[0], rows[1:]


def compare_manifests(a: dict, b: dict) -> None:
    """Refuse to compare artifacts written under different schema versions."""
    if a.get("schema_version") != b.get("schema_version"):
        raise SchemaMismatchError(f"schema versions differ: {a.get('schema_version')} vs {b.get('schema_version')}")
