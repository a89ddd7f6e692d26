"""Plain-text exports: metric tables, JSON summaries, CDFs and heatmaps.

Floats are written with ``repr`` so that reading a file back reproduces the
exported values exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .metrics import ARRAYS, MetricRecord

SCHEMA_VERSION = 1
COLUMNS = tuple(f.name for f in fields(MetricRecord))
INT_COLUMNS = {"update", "n_seeds"}


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cell(name: str, value) -> str:
    if name in ARRAYS:
        return json.dumps(value)
    if name in INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_records_csv(records, path) -> Path:
    """One record per row; array-valued columns hold JSON arrays."""
    path = _prepare(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_cell(c, getattr(r, c)) for c in COLUMNS])
    return path


def _to_nested_tuple(obj):
    if isinstance(obj, list):
        return tuple(_to_nested_tuple(v) for v in obj)
    return float(obj)


def _parse(name: str, text: str):
    if name in ARRAYS:
        return _to_nested_tuple(json.loads(text))
    if name in INT_COLUMNS:
        return int(text)
    return float(text)


def read_records_csv(path) -> list[MetricRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return [MetricRecord(**{c: _parse(c, v) for c, v in zip(header, row)}) for row in body]


def record_to_dict(r: MetricRecord) -> dict:
    d = asdict(r)
    for name in ARRAYS:
        d[name] = json.loads(json.dumps(d[name]))
    return d


def record_from_dict(d: dict) -> MetricRecord:
    d = dict(d)
    for name in ARRAYS:
        d[name] = _to_nested_tuple(d[name])
    return MetricRecord(**d)


def write_summary_json(path, records, config: dict | None = None, extra: dict | None = None) -> Path:
    """Versioned structured summary of a run."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": config or {},
        "records": [record_to_dict(r) for r in records],
    }
    if extra:
        doc["extra"] = extra
    path = _prepare(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_summary_json(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    doc["records"] = [record_from_dict(r) for r in doc["records"]]
    return doc


def write_cdf(path, pairs) -> Path:
    path = _prepare(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("value", "cumulative_probability"))
        for v, c in pairs:
            w.writerow((repr(float(v)), repr(float(c))))
    return path


def write_heatmap(path, matrix) -> Path:
    """N x K matrix, one BS per row, no header."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    path = _prepare(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_table(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if rows and rows[0] and not _is_number(rows[0][0]):
        rows = rows[1:]
    return np.array([[float(v) for v in r] for r in rows], dtype=float)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
