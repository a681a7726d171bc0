"""PCA state compression: fit a basis on logged plant states, project
full states to q coordinates, and reconstruct.

The basis keeps the full singular spectrum; the retained count q is a
plain attribute chosen afterwards (``choose_q``) so one fit serves any
variance threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegenerateData, DimensionMismatch
from .iotools import read_csv_matrix, read_json, write_csv, write_json
from .validation import as_matrix

_FORMAT_VERSION = 1


class StateNormalizer:
    """Per-field scaling of plant state vectors before PCA.

    Concentrations are divided by their electrode's maximum and the
    temperature by the Arrhenius reference, so all entries are O(1).
    """

    def __init__(self, scales: np.ndarray):
        scales = np.asarray(scales, dtype=float)
        if scales.ndim != 1 or np.any(scales <= 0):
            raise ValueError("scales must be a positive vector")
        self.scales = scales

    @classmethod
    def from_params(cls, params) -> "StateNormalizer":
        n = params.n_radial
        scales = np.concatenate([
            np.full(n, params.neg.c_s_max),
            np.full(n, params.pos.c_s_max),
            [params.t_ref],
        ])
        return cls(scales)

    @classmethod
    def identity(cls, n: int) -> "StateNormalizer":
        return cls(np.ones(n))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.scales.size:
            raise DimensionMismatch(
                f"state has {x.shape[-1]} entries, normalizer expects {self.scales.size}"
            )
        return x / self.scales

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.scales.size:
            raise DimensionMismatch(
                f"state has {x.shape[-1]} entries, normalizer expects {self.scales.size}"
            )
        return x * self.scales


@dataclass
class PcaBasis:
    """Mean, principal directions, and spectrum of a fitted PCA basis."""

    mean: np.ndarray  # (n,)
    components: np.ndarray  # (rank, n), rows orthonormal
    singular_values: np.ndarray  # (rank,)
    explained_variance_ratio: np.ndarray  # (rank,)
    q: int  # retained count used by transform

    @property
    def n_features(self) -> int:
        return self.mean.size

    @property
    def rank(self) -> int:
        return self.components.shape[0]

    def with_q(self, q: int) -> "PcaBasis":
        if not 1 <= q <= self.rank:
            raise ValueError(f"q must be in [1, {self.rank}]")
        return replace(self, q=int(q))

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise DimensionMismatch(
                f"state has {x.shape[-1]} entries, basis expects {self.n_features}"
            )
        return (x - self.mean) @ self.components[: self.q].T

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.q:
            raise DimensionMismatch(f"reduced state has {z.shape[-1]} entries, expected {self.q}")
        return self.mean + z @ self.components[: self.q]

    def save(self, prefix) -> None:
        """Write <prefix>.json header and <prefix>_matrix.csv payload.

        The CSV holds the mean as its first row followed by one row per
        component; singular values and variance ratios live in the header.
        """
        prefix = Path(prefix)
        matrix_name = prefix.name + "_matrix.csv"
        write_json(prefix.with_suffix(".json"), {
            "format_version": _FORMAT_VERSION,
            "kind": "pca_basis",
            "n_features": int(self.n_features),
            "rank": int(self.rank),
            "q": int(self.q),
            "singular_values": self.singular_values.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "matrix_file": matrix_name,
        })
        header = [f"x{i}" for i in range(self.n_features)]
        rows = np.vstack([self.mean[None, :], self.components])
        write_csv(prefix.parent / matrix_name, header, rows)

    @classmethod
    def load(cls, prefix) -> "PcaBasis":
        prefix = Path(prefix)
        meta = read_json(prefix.with_suffix(".json"))
        if meta.get("kind") != "pca_basis":
            raise ValueError(f"{prefix}: not a PCA basis header")
        rows = read_csv_matrix(prefix.parent / meta["matrix_file"])
        return cls(
            mean=rows[0],
            components=rows[1:],
            singular_values=np.asarray(meta["singular_values"], dtype=float),
            explained_variance_ratio=np.asarray(meta["explained_variance_ratio"], dtype=float),
            q=int(meta["q"]),
        )


def fit_pca(states: np.ndarray) -> PcaBasis:
    """Fit a PCA basis to row-stacked states via SVD of the centered data.

    Component signs are fixed by making each row's largest-magnitude
    entry positive so that serialized bases are reproducible.
    """
    x = as_matrix(states, "states")
    m = x.shape[0]
    if m < 2:
        raise DegenerateData("need at least two states to fit a basis")
    mean = x.mean(axis=0)
    centered = x - mean
    if not np.any(np.abs(centered) > 0.0):
        raise DegenerateData("all states identical; no variance to decompose")
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    flip = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    flip[flip == 0] = 1.0
    components = vt * flip[:, None]
    total = float(np.sum(svals**2))
    return PcaBasis(
        mean=mean,
        components=components,
        singular_values=svals,
        explained_variance_ratio=svals**2 / total,
        q=int(svals.size),
    )


def choose_q(basis: PcaBasis, threshold: float) -> int:
    """Smallest q whose cumulative explained variance reaches threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    cumulative = np.cumsum(basis.explained_variance_ratio)
    hits = np.nonzero(cumulative >= threshold - 1e-12)[0]
    return int(hits[0]) + 1 if hits.size else basis.rank


class PcaReducer(BaseEstimator, TransformerMixin):
    """Estimator-style front end over :func:`fit_pca`.

    Exactly one of ``n_components`` / ``variance_threshold`` picks q;
    with neither, the full spectrum is retained.
    """

    def __init__(self, n_components=None, variance_threshold=None):
        self.n_components = n_components
        self.variance_threshold = variance_threshold

    def fit(self, X, y=None):
        if self.n_components is not None and self.variance_threshold is not None:
            raise ValueError("set n_components or variance_threshold, not both")
        basis = fit_pca(X)
        if self.n_components is not None:
            basis = basis.with_q(self.n_components)
        elif self.variance_threshold is not None:
            basis = basis.with_q(choose_q(basis, self.variance_threshold))
        self.basis_ = basis
        self.n_components_ = basis.q
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return self.basis_.transform(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "basis_")
        return self.basis_.inverse_transform(X)
