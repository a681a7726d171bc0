"""Small input-validation helpers shared by the estimator-style classes."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch


def as_float_array(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(x, name: str = "X") -> np.ndarray:
    arr = as_float_array(x, name)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={arr.ndim}")
    return arr


def as_vector(x, length: int | None = None, name: str = "x") -> np.ndarray:
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(
            f"{name} has length {arr.shape[0]}, expected {length}"
        )
    return arr


def check_columns(x: np.ndarray, n_cols: int, name: str = "X") -> np.ndarray:
    if x.shape[-1] != n_cols:
        raise DimensionMismatch(
            f"{name} has {x.shape[-1]} columns, expected {n_cols}"
        )
    return x
