"""Deterministic file I/O: canonical JSON/CSV writers and content hashing.

Pipeline artifacts must be byte-stable across reruns with the same seed, so
floats are always serialized through ``repr(float(x))`` (shortest round-trip
form) and JSON keys are sorted.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def fmt_float(x) -> str:
    """Shortest exact decimal representation of a float."""
    return repr(float(x))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2)
    path.write_text(text + "\n")
    return path


def read_json(path) -> Any:
    return json.loads(Path(path).read_text())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows with floats formatted via :func:`fmt_float`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    fmt_float(v)
                    if isinstance(v, (float, np.floating))
                    else str(v)
                    for v in row
                ]
            )
    return path


def read_csv_columns(path) -> dict[str, list[str]]:
    """Read a CSV into {column name: list of raw string cells}."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(cell)
    return cols


def read_csv_matrix(path, columns: Sequence[str] | None = None) -> np.ndarray:
    """Read numeric CSV columns into a (rows, cols) float array."""
    cols = read_csv_columns(path)
    names = list(cols) if columns is None else list(columns)
    data = [np.array([float(v) for v in cols[name]]) for name in names]
    return np.column_stack(data) if data else np.empty((0, 0))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_json(obj: Any) -> str:
    return sha256_bytes(
        json.dumps(_jsonable(obj), sort_keys=True).encode("utf-8")
    )
