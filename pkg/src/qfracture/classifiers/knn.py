from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KNNModel:
    """Brute-force Euclidean k-nearest-neighbours.

    Distance ties go to the lower training index; the score is the fraction
    of the ``k`` neighbours labelled 1 and a 50/50 vote predicts 0.
    """

    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    k: int = 5

    kind = "knn"
    threshold = 0.5

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def neighbours(self, Q) -> np.ndarray:
        Q = np.atleast_2d(Q)
        d2 = ((Q[:, None, :] - self.X[None, :, :]) ** 2).sum(-1)
        k = min(self.k, len(self.y))
        return np.argsort(d2, axis=1, kind="stable")[:, :k]

    def scores(self, Q) -> np.ndarray:
        return self.y[self.neighbours(Q)].mean(axis=1)

    def labels(self, scores) -> np.ndarray:
        return (scores > self.threshold).astype(np.int64)

    def to_params(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "k": self.k, "n_features": self.n_features}

    @classmethod
    def from_params(cls, p: dict) -> "KNNModel":
        X = np.asarray(p["X"], dtype=np.float64).reshape(-1, p["n_features"])
        return cls(X, np.asarray(p["y"], dtype=np.float64), int(p["k"]))


def train_knn(X, y, k=5) -> KNNModel:
    return KNNModel(np.array(X, dtype=np.float64), np.array(y, dtype=np.float64), int(k))
