"""Decision tree, random forest and gradient-boosted trees."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import Tree, build_tree


@dataclass(frozen=True)
class DecisionTreeModel:
    tree: Tree
    n_features: int

    kind = "dtree"
    threshold = 0.5

    def scores(self, X) -> np.ndarray:
        return self.tree.predict_value(X)

    def labels(self, scores) -> np.ndarray:
        return (scores > self.threshold).astype(np.int64)

    def to_params(self) -> dict:
        return {"tree": self.tree.to_params(), "n_features": self.n_features}

    @classmethod
    def from_params(cls, p: dict) -> "DecisionTreeModel":
        return cls(Tree.from_params(p["tree"]), int(p["n_features"]))


def train_dtree(X, y, max_depth=8, min_samples_split=2) -> DecisionTreeModel:
    X = np.asarray(X, dtype=np.float64)
    tree = build_tree(X, y, "gini", max_depth, min_samples_split)
    return DecisionTreeModel(tree, X.shape[1])


@dataclass(frozen=True)
class RandomForestModel:
    """Bagged CART trees; the score is the fraction of trees voting 1."""

    trees: tuple[Tree, ...] = field(repr=False)
    n_features: int

    kind = "rforest"
    threshold = 0.5

    def votes(self, X) -> np.ndarray:
        return np.stack([(t.predict_value(X) > 0.5).astype(np.float64) for t in self.trees])

    def scores(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=0)

    def labels(self, scores) -> np.ndarray:
        return (scores > self.threshold).astype(np.int64)

    def to_params(self) -> dict:
        return {"trees": [t.to_params() for t in self.trees], "n_features": self.n_features}

    @classmethod
    def from_params(cls, p: dict) -> "RandomForestModel":
        return cls(tuple(Tree.from_params(t) for t in p["trees"]), int(p["n_features"]))


def resolve_max_features(max_features, d: int) -> int:
    if max_features in (None, "all"):
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d)))
    return min(d, int(max_features))


def train_rforest(X, y, seed=0, n_trees=100, max_depth=8, min_samples_split=2,
                  max_features="sqrt", bootstrap=True) -> RandomForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    m = resolve_max_features(max_features, d)
    # one independent child stream per tree keeps trees reproducible in isolation
    streams = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(build_tree(X[idx], y[idx], "gini", max_depth, min_samples_split,
                                max_features=m, rng=rng))
    return RandomForestModel(tuple(trees), d)


def logistic_loss(y, F) -> float:
    """Mean negative log-likelihood of labels ``y`` under logits ``F``."""
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def _sigmoid(F):
    return np.exp(-np.logaddexp(0.0, -F))


@dataclass(frozen=True)
class GradientBoostingModel:
    """Additive logit model ``F(x) = init + lr * sum_t tree_t(x)``.

    Each regression tree is fit to the negative loss gradient ``y - p`` and its
    leaves hold the mean residual.  With per-sample curvature bounded by 1/4,
    any ``learning_rate < 8`` makes the training loss non-increasing.
    """

    init: float
    learning_rate: float
    trees: tuple[Tree, ...] = field(repr=False)
    n_features: int
    loss_history: tuple[float, ...] = ()

    kind = "gboost"
    threshold = 0.0

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        F = np.full(len(X), self.init)
        for t in self.trees:
            F += self.learning_rate * t.predict_value(X)
        return F

    def labels(self, scores) -> np.ndarray:
        return (scores >= self.threshold).astype(np.int64)

    def to_params(self) -> dict:
        return {
            "init": self.init,
            "learning_rate": self.learning_rate,
            "trees": [t.to_params() for t in self.trees],
            "n_features": self.n_features,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_params(cls, p: dict) -> "GradientBoostingModel":
        return cls(float(p["init"]), float(p["learning_rate"]),
                   tuple(Tree.from_params(t) for t in p["trees"]),
                   int(p["n_features"]), tuple(p["loss_history"]))


def train_gboost(X, y, rounds=100, learning_rate=0.1, max_depth=3, min_samples_split=2) -> GradientBoostingModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    prior = y.mean()
    init = float(math.log(prior / (1.0 - prior)))
    F = np.full(len(y), init)
    history = [logistic_loss(y, F)]
    trees = []
    for _ in range(rounds):
        residual = y - _sigmoid(F)
        tree = build_tree(X, residual, "mse", max_depth, min_samples_split)
        F = F + learning_rate * tree.predict_value(X)
        trees.append(tree)
        history.append(logistic_loss(y, F))
    return GradientBoostingModel(init, float(learning_rate), tuple(trees), X.shape[1], tuple(history))
