"""Dual-source feature vectors: PCA features followed by quantum features."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, FormatError

N_CLASSICAL = 8
N_QUANTUM = 8
# columns whose training std falls below this are treated as constant
ZERO_STD = 1e-12


def fuse(pca_feats, quantum_feats, n_classical: int = N_CLASSICAL, n_quantum: int = N_QUANTUM) -> np.ndarray:
    """Concatenate into ``[pca_0..pca_7, q_0..q_7]``; works row-wise on batches too."""
    a = np.asarray(pca_feats, dtype=np.float64)
    b = np.asarray(quantum_feats, dtype=np.float64)
    if a.shape[-1] != n_classical or b.shape[-1] != n_quantum:
        raise DimensionError(
            f"expected {n_classical} PCA and {n_quantum} quantum features, got {a.shape[-1]} and {b.shape[-1]}"
        )
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError("PCA and quantum batches differ in length")
    return np.concatenate([a, b], axis=-1)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray = field(repr=False)
    stds: np.ndarray = field(repr=False)

    @property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of zero-variance dimensions (these map to 0)."""
        return self.stds < ZERO_STD

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["means"], dtype=np.float64), np.asarray(d["stds"], dtype=np.float64))


def standardizer_fit(train) -> Standardizer:
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"standardizer needs at least 2 training rows, got shape {X.shape}")
    return Standardizer(X.mean(axis=0), X.std(axis=0))


def standardizer_apply(s: Standardizer, v) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != s.means.shape[0]:
        raise DimensionError(f"expected {s.means.shape[0]} features, got {x.shape[-1]}")
    safe = np.where(s.degenerate, 1.0, s.stds)
    return np.where(s.degenerate, 0.0, (x - s.means) / safe)


def feature_header(n_classical: int, n_quantum: int) -> list[str]:
    return [f"pca_{i}" for i in range(n_classical)] + [f"q_{i}" for i in range(n_quantum)] + ["label"]


def write_feature_csv(path, features, labels, n_classical: int, n_quantum: int = 0):
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != n_classical + n_quantum:
        raise DimensionError(f"{X.shape[1]} columns do not match {n_classical}+{n_quantum} layout")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(feature_header(n_classical, n_quantum))
        for row, y in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


def read_feature_csv(path):
    """Return ``(features, labels, header)`` from a feature CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "label":
        raise FormatError(f"{path}: missing header ending in 'label'")
    try:
        data = np.array([[float(v) for v in r[:-1]] for r in rows[1:]]).reshape(len(rows) - 1, len(rows[0]) - 1)
        labels = np.array([int(r[-1]) for r in rows[1:]], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return data, labels, rows[0]
