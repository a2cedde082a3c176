"""Principal component analysis on centred data via the thin SVD."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, RankError


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA.

    ``components`` holds one unit-length principal direction per row, ordered
    by descending ``variances`` (sample variance, N-1 denominator).  Each row
    is signed so that its largest-magnitude entry is positive.
    """

    mean: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)
    variances: np.ndarray
    total_variance: float = 0.0

    def __post_init__(self):
        for name in ("mean", "components", "variances"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "variances": self.variances.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(np.asarray(d["mean"]), np.asarray(d["components"]).reshape(len(d["variances"]), -1),
                   np.asarray(d["variances"]), float(d["total_variance"]))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def pca_fit(data, k: int = 8) -> PcaModel:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected an N x D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise DataError(f"PCA needs at least 2 samples, got {n}")
    if not 1 <= k <= min(n - 1, d):
        raise RankError(f"k={k} outside [1, min(N-1, D)] = [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    centred = X - mean
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    variances = s ** 2 / (n - 1)
    total = float(np.sum(centred ** 2) / (n - 1))
    return PcaModel(mean, _fix_signs(vt[:k]), variances[:k], total)


def pca_transform(model: PcaModel, sample) -> np.ndarray:
    """Project one sample (D,) or a batch (N, D) onto the components."""
    x = np.asarray(sample, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise DimensionError(f"sample has {x.shape[-1]} features, model expects {model.dim}")
    return (x - model.mean) @ model.components.T


def pca_inverse_transform(model: PcaModel, coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.float64)
    if c.shape[-1] != model.k:
        raise DimensionError(f"coords have {c.shape[-1]} entries, model has k={model.k}")
    return model.mean + c @ model.components


def explained_variance_ratio(model: PcaModel, total_variance: float | None = None) -> np.ndarray:
    """Fraction of ``total_variance`` (default: the fitted data's) per component."""
    total = model.total_variance if total_variance is None else total_variance
    if not total > 0:
        raise DataError("total variance must be positive")
    return model.variances / total


def reconstruction_error(model: PcaModel, data) -> float:
    """Mean squared reconstruction error over the rows of ``data``."""
    X = np.asarray(data, dtype=np.float64)
    recon = pca_inverse_transform(model, pca_transform(model, X))
    return float(np.mean(np.sum((X - recon) ** 2, axis=1)))
