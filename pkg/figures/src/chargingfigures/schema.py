"""Input validation for the experiment artifacts the figures consume."""

import csv
import json
from pathlib import Path

import numpy as np


class SchemaError(Exception):
    """An input file does not match its documented schema."""


def read_columns(path, required=()):
    """Read a headered CSV into float column arrays, validating shape.

    Any defect is reported with the offending column (or row) named.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    for name in required:
        if name not in header:
            raise SchemaError(f"{path}: missing column {name!r}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(
                f"{path}: row {i + 2} has {len(row)} fields, header has {len(header)}"
            )
    columns = {}
    for j, name in enumerate(header):
        try:
            columns[name] = np.array([float(row[j]) for row in rows])
        except ValueError:
            raise SchemaError(f"{path}: column {name!r} is not numeric") from None
    return columns


def read_json_file(path, required=()):
    """Read a JSON artifact, checking the keys a figure needs."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    for name in required:
        if name not in obj:
            raise SchemaError(f"{path}: missing key {name!r}")
    return obj


def pooled_values(path):
    """All numeric values of a residual CSV, columns concatenated in file order."""
    columns = read_columns(path)
    return np.concatenate(list(columns.values()))
