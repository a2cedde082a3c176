"""CART trees stored as flat node arrays.

The same builder grows classification trees (Gini impurity on 0/1 labels,
leaf value = fraction of class 1) and regression trees (squared error, leaf
value = mean target) for gradient boosting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# minimum impurity decrease for a split to count as an improvement
MIN_GAIN = 1e-12
LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray      # split feature per node, LEAF for leaves
    threshold: np.ndarray    # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray     # weighted (summed) impurity of the node's samples

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] == LEAF:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_params(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity": self.impurity.tolist(),
        }

    @classmethod
    def from_params(cls, p: dict) -> "Tree":
        ints = {k: np.asarray(p[k], dtype=np.int64) for k in ("feature", "left", "right", "n_samples")}
        floats = {k: np.asarray(p[k], dtype=np.float64) for k in ("threshold", "value", "impurity")}
        return cls(**ints, **floats)


def node_impurity(y, criterion: str) -> float:
    """Summed impurity: n * gini for 'gini', sum of squared deviations for 'mse'."""
    n = len(y)
    if n == 0:
        return 0.0
    s1 = float(np.sum(y))
    if criterion == "gini":
        return 2.0 * s1 * (n - s1) / n
    return float(np.sum((y - s1 / n) ** 2))


def _best_split(X, y, features, criterion):
    n = len(y)
    best = None  # (child_impurity, feature, threshold)
    total1 = y.sum()
    total2 = (y * y).sum()
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        s1 = np.cumsum(ys)[:-1]
        if criterion == "gini":
            r1 = total1 - s1
            child = 2.0 * s1 * (n_left - s1) / n_left + 2.0 * r1 * (n_right - r1) / n_right
        else:
            s2 = np.cumsum(ys * ys)[:-1]
            r1, r2 = total1 - s1, total2 - s2
            child = (s2 - s1 * s1 / n_left) + (r2 - r1 * r1 / n_right)
        child = np.where(distinct, child, np.inf)
        i = int(np.argmin(child))
        if best is None or child[i] < best[0]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:  # midpoint rounded up onto the right value
                thr = xs[i]
            best = (float(child[i]), int(f), float(thr))
    return best


def build_tree(
    X,
    y,
    criterion: str = "gini",
    max_depth: int = 8,
    min_samples_split: int = 2,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a CART tree depth-first.

    ``max_features`` below the feature count draws that many candidate
    features per node from ``rng`` (sorted, without replacement); otherwise
    every feature is searched in index order, so ties go to the lowest
    feature index and then the lowest threshold.

    Splits must lower impurity by more than ``MIN_GAIN``, with one exception
    for Gini trees: an impure node whose best split has zero gain is still
    split when its children are allowed to split again.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    subsample = max_features is not None and max_features < d
    if subsample and rng is None:
        raise ValueError("feature subsampling needs an rng")

    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")}

    def new_node(idx):
        nodes["feature"].append(LEAF)
        nodes["threshold"].append(0.0)
        nodes["left"].append(LEAF)
        nodes["right"].append(LEAF)
        nodes["value"].append(float(np.mean(y[idx])))
        nodes["n_samples"].append(len(idx))
        nodes["impurity"].append(node_impurity(y[idx], criterion))
        return len(nodes["feature"]) - 1

    def grow(idx, depth):
        node = new_node(idx)
        parent = nodes["impurity"][node]
        if depth >= max_depth or len(idx) < min_samples_split or parent <= MIN_GAIN:
            return node
        feats = np.sort(rng.choice(d, max_features, replace=False)) if subsample else range(d)
        split = _best_split(X[idx], y[idx], feats, criterion)
        if split is None:
            return node
        if parent - split[0] <= MIN_GAIN:
            # no single split helps (XOR-like node): a zero-gain split is still
            # taken when its children can split again, otherwise stop here
            if criterion != "gini" or depth + 1 >= max_depth:
                return node
        _, f, thr = split
        mask = X[idx, f] <= thr
        nodes["feature"][node] = f
        nodes["threshold"][node] = thr
        nodes["left"][node] = grow(idx[mask], depth + 1)
        nodes["right"][node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return Tree(
        feature=np.asarray(nodes["feature"], dtype=np.int64),
        threshold=np.asarray(nodes["threshold"], dtype=np.float64),
        left=np.asarray(nodes["left"], dtype=np.int64),
        right=np.asarray(nodes["right"], dtype=np.int64),
        value=np.asarray(nodes["value"], dtype=np.float64),
        n_samples=np.asarray(nodes["n_samples"], dtype=np.int64),
        impurity=np.asarray(nodes["impurity"], dtype=np.float64),
    )
