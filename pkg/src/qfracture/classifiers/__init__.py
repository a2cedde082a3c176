"""Binary classifiers written from scratch: SVM, KNN, decision tree, random
forest and gradient boosting, behind a common train/predict/score API.

Labels are 0 (normal) and 1 (fractured).  Every trained model exposes a
continuous ``decision_score`` and a kind-specific threshold:

========  ====================================  ==============
kind      score                                 predicts 1 when
========  ====================================  ==============
svm       signed margin                         score >= 0
gboost    logit                                 score >= 0
knn       fraction of k neighbours labelled 1   score > 0.5
dtree     class-1 fraction in the leaf          score > 0.5
rforest   fraction of trees voting 1            score > 0.5
========  ====================================  ==============
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, DegenerateDataError, DimensionError, FormatError, VersionError
from .ensembles import (
    DecisionTreeModel,
    GradientBoostingModel,
    RandomForestModel,
    train_dtree,
    train_gboost,
    train_rforest,
)
from .knn import KNNModel, train_knn
from .svm import SVMModel, train_svm

MODEL_FORMAT_VERSION = 1

DEFAULT_PARAMS = {
    "svm": {"C": 1.0, "gamma": "scale", "tol": 1e-3, "max_passes": 100},
    "knn": {"k": 5},
    "dtree": {"max_depth": 8, "min_samples_split": 2},
    "rforest": {"n_trees": 100, "max_depth": 8, "min_samples_split": 2,
                "max_features": "sqrt", "bootstrap": True},
    "gboost": {"rounds": 100, "learning_rate": 0.1, "max_depth": 3, "min_samples_split": 2},
}
KINDS = tuple(DEFAULT_PARAMS)

_MODEL_CLASSES = {
    "svm": SVMModel,
    "knn": KNNModel,
    "dtree": DecisionTreeModel,
    "rforest": RandomForestModel,
    "gboost": GradientBoostingModel,
}

TrainedModel = SVMModel | KNNModel | DecisionTreeModel | RandomForestModel | GradientBoostingModel


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError(f"features must be a non-empty N x d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} rows but {y.size} labels")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 (normal) or 1 (fractured)")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.kind], **self.params}
        _validate_params(self.kind, merged)
        object.__setattr__(self, "params", merged)

    @property
    def name(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


def _validate_params(kind, p):
    def positive(name, integer=False):
        v = p[name]
        if integer and (not isinstance(v, (int, np.integer)) or isinstance(v, bool)):
            raise ConfigError(f"{kind}.{name} must be an integer")
        if not v > 0:
            raise ConfigError(f"{kind}.{name} must be positive")

    if kind == "svm":
        positive("C")
        positive("tol")
        positive("max_passes", True)
        if p["gamma"] not in (None, "scale") and not float(p["gamma"]) > 0:
            raise ConfigError("svm.gamma must be positive or 'scale'")
    elif kind == "knn":
        positive("k", True)
    else:
        positive("max_depth", True)
        if p["min_samples_split"] < 2:
            raise ConfigError(f"{kind}.min_samples_split must be >= 2")
        if kind == "rforest":
            positive("n_trees", True)
            mf = p["max_features"]
            if mf not in (None, "all", "sqrt", "log2") and not (isinstance(mf, int) and mf > 0):
                raise ConfigError("rforest.max_features must be 'sqrt', 'log2', 'all' or a positive int")
        if kind == "gboost":
            if not isinstance(p["rounds"], int) or p["rounds"] < 0:
                raise ConfigError("gboost.rounds must be a non-negative integer")
            positive("learning_rate")


def train(spec: ModelSpec, data: Dataset) -> TrainedModel:
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    X, y = data.features, data.labels
    p = spec.params
    if spec.kind == "knn":
        return train_knn(X, y, p["k"])
    if len(np.unique(y)) < 2:
        raise DegenerateDataError(f"{spec.kind} needs both classes in the training data")
    if spec.kind == "svm":
        return train_svm(X, y, p["C"], p["gamma"], p["tol"], p["max_passes"])
    if spec.kind == "dtree":
        return train_dtree(X, y, p["max_depth"], p["min_samples_split"])
    if spec.kind == "rforest":
        return train_rforest(X, y, spec.seed, p["n_trees"], p["max_depth"], p["min_samples_split"],
                             p["max_features"], p["bootstrap"])
    return train_gboost(X, y, p["rounds"], p["learning_rate"], p["max_depth"], p["min_samples_split"])


def _as_batch(model, x):
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != model.n_features:
        raise DimensionError(f"expected {model.n_features} features, got {a.shape[1]}")
    return a, single


def decision_score(model: TrainedModel, x):
    """Continuous class-1 confidence for one vector (float) or a batch (array)."""
    X, single = _as_batch(model, x)
    s = model.scores(X)
    return float(s[0]) if single else s


def predict(model: TrainedModel, x):
    X, single = _as_batch(model, x)
    labels = model.labels(model.scores(X))
    return int(labels[0]) if single else labels


def model_to_dict(model: TrainedModel) -> dict:
    return {"version": MODEL_FORMAT_VERSION, "kind": model.kind, "params": model.to_params()}


def model_from_dict(d: dict) -> TrainedModel:
    if not isinstance(d, dict) or "version" not in d:
        raise FormatError("model record lacks a version field")
    if d["version"] != MODEL_FORMAT_VERSION:
        raise VersionError(f"model format version {d['version']} is not supported (expected {MODEL_FORMAT_VERSION})")
    try:
        return _MODEL_CLASSES[d["kind"]].from_params(d["params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model record: {exc!r}") from exc


def save_model(model: TrainedModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TrainedModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_dict(d)


__all__ = [
    "DEFAULT_PARAMS", "KINDS", "Dataset", "ModelSpec", "TrainedModel", "train", "predict",
    "decision_score", "model_to_dict", "model_from_dict", "save_model", "load_model",
    "SVMModel", "KNNModel", "DecisionTreeModel", "RandomForestModel", "GradientBoostingModel",
]
