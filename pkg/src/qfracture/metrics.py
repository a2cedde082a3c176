"""Evaluation metrics: confusion counts, scalar scores, ROC/PR curves,
Monte-Carlo cross-validation and wall-clock timing.

The positive class is always 1 (fractured).  Ratios with a zero
denominator evaluate to 0 and are listed in ``Scores.degenerate`` rather
than leaking NaN into reports.
"""
from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classifiers import Dataset, ModelSpec, decision_score, predict, train
from .errors import ConfigError, DataError, DegenerateDataError
from .fusion import standardizer_apply, standardizer_fit


def _labels(values, name) -> np.ndarray:
    a = np.asarray(values)
    if a.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if not np.isin(a, (0, 1)).all():
        raise DataError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same outcomes with the other class treated as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion(preds, labels) -> ConfusionMatrix:
    p = _labels(preds, "preds")
    t = _labels(labels, "labels")
    if p.shape != t.shape:
        raise DataError(f"{p.size} predictions but {t.size} labels")
    if p.size == 0:
        raise DataError("cannot build a confusion matrix from zero samples")
    return ConfusionMatrix(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        tn=int(np.sum((p == 0) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
    )


@dataclass(frozen=True)
class Scores:
    accuracy: float
    precision: float
    recall: float
    f1: float
    f2: float
    kappa: float
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("accuracy", "precision", "recall", "f1", "f2", "kappa")}
        d["degenerate"] = list(self.degenerate)
        return d


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def f_beta(precision: float, recall: float, beta: float) -> float | None:
    b2 = beta * beta
    den = b2 * precision + recall
    return None if den == 0 else (1 + b2) * precision * recall / den


def scores(cm: ConfusionMatrix) -> Scores:
    n = cm.total
    if n == 0:
        raise DataError("empty confusion matrix")
    flags: list[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    fs = {}
    for name, beta in (("f1", 1.0), ("f2", 2.0)):
        v = f_beta(precision, recall, beta)
        if v is None:
            flags.append(name)
            v = 0.0
        fs[name] = v
    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.tn + cm.fn) * (cm.tn + cm.fp)) / (n * n)
    if p_e == 1.0:
        # every prediction and label is the same class: agreement is total
        # but chance agreement is too, so the ratio is 0/0
        flags.append("kappa")
        kappa = 1.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return Scores((cm.tp + cm.tn) / n, precision, recall, fs["f1"], fs["f2"], kappa, tuple(flags))


@dataclass(frozen=True)
class CurveData:
    """Curve points ``(x, y, threshold)``; ROC uses (fpr, tpr), PR (recall, precision)."""

    kind: str
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist(), self.thresholds.tolist()))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "x", "y"])
            for x, y, t in self.points:
                w.writerow([repr(t), repr(x), repr(y)])


def _sweep(score_values, labels):
    """Cumulative (tp, fp) counts at each distinct score, highest first.

    A sample is called positive at threshold ``t`` when ``score >= t``.
    """
    s = np.asarray(score_values, dtype=np.float64)
    t = _labels(labels, "labels")
    if s.shape != t.shape:
        raise DataError(f"{s.size} scores but {t.size} labels")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    last = np.r_[s[1:] != s[:-1], True]  # final index of each tie group
    tp = np.cumsum(t)[last]
    fp = np.cumsum(1 - t)[last]
    return s[last], tp, fp, int(t.sum()), int(t.size - t.sum())


def roc(score_values, labels) -> tuple[CurveData, float]:
    thr, tp, fp, pos, neg = _sweep(score_values, labels)
    if pos == 0 or neg == 0:
        raise DataError("ROC needs both classes among the labels")
    fpr = np.r_[0.0, fp / neg]
    tpr = np.r_[0.0, tp / pos]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return CurveData("roc", fpr, tpr, np.r_[np.inf, thr]), auc


def pr(score_values, labels) -> tuple[CurveData, float]:
    thr, tp, fp, pos, _ = _sweep(score_values, labels)
    if pos == 0:
        raise DataError("precision-recall needs at least one positive label")
    recall = np.r_[0.0, tp / pos]
    precision = np.r_[1.0, tp / (tp + fp)]
    ap = float(np.sum(np.diff(recall) * precision[1:]))
    return CurveData("pr", recall, precision, np.r_[np.inf, thr]), ap


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    scores: Scores
    roc: CurveData | None
    roc_auc: float | None
    pr: CurveData | None
    average_precision: float | None

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "scores": self.scores.to_dict(),
            "roc_auc": self.roc_auc,
            "average_precision": self.average_precision,
        }


def evaluate(preds, score_values, labels) -> EvalReport:
    """Confusion, scalar scores and both curves; curves are None when undefined."""
    cm = confusion(preds, labels)
    t = _labels(labels, "labels")
    roc_curve = auc = pr_curve = ap = None
    if 0 < t.sum() < t.size:
        roc_curve, auc = roc(score_values, t)
    if t.sum() > 0:
        pr_curve, ap = pr(score_values, t)
    return EvalReport(cm, scores(cm), roc_curve, auc, pr_curve, ap)


def evaluate_model(model, data: Dataset) -> EvalReport:
    return evaluate(predict(model, data.features), decision_score(model, data.features), data.labels)


@dataclass(frozen=True)
class CvReport:
    accuracies: tuple[float, ...]
    mean: float
    std: float
    seed: int
    method: str = "mc"
    test_fraction: float = 0.1
    degenerate: tuple[str, ...] = ()

    @property
    def n_splits(self) -> int:
        return len(self.accuracies)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_splits": self.n_splits,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "accuracies": list(self.accuracies),
            "mean": self.mean,
            "std": self.std,
            "degenerate": list(self.degenerate),
        }


def stratified_holdout(labels, test_fraction: float, rng: np.random.Generator):
    """Random (train, test) index arrays with ``floor(test_fraction * n_c)``
    test samples from each class, but at least one from any class with two
    or more samples."""
    y = np.asarray(labels)
    train_idx, test_idx = [], []
    for c in (0, 1):
        members = np.flatnonzero(y == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_test = int(math.floor(test_fraction * members.size))
        if members.size >= 2:
            n_test = min(max(n_test, 1), members.size - 1)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_folds(labels, n_folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Partition indices into ``n_folds`` test folds, dealing each shuffled class round-robin."""
    y = np.asarray(labels)
    assign = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in (0, 1):
        members = rng.permutation(np.flatnonzero(y == c))
        assign[members] = (np.arange(members.size) + offset) % n_folds
        offset += members.size
    return [np.flatnonzero(assign == f) for f in range(n_folds)]


def monte_carlo_cv(
    spec: ModelSpec,
    data: Dataset,
    n_splits: int = 10,
    test_fraction: float = 0.1,
    seed: int = 0,
    method: str = "mc",
    standardize: bool = False,
) -> CvReport:
    """Repeated stratified hold-out accuracy (``method="mc"``) or stratified
    k-fold accuracy (``method="kfold"``, ``n_splits`` folds).

    Split ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so any
    split can be reproduced on its own.  With ``standardize`` a standardizer
    is fit on each training part and applied to both parts.
    """
    if n_splits < 1:
        raise ConfigError("n_splits must be at least 1")
    if method == "mc" and not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    if method not in ("mc", "kfold"):
        raise ConfigError(f"unknown cross-validation method {method!r}")

    if method == "mc":
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_splits)]
        splits = [stratified_holdout(data.labels, test_fraction, r) for r in rngs]
    else:
        if n_splits < 2 or n_splits > len(data):
            raise ConfigError(f"k-fold needs 2 <= n_splits <= {len(data)}")
        folds = stratified_folds(data.labels, n_splits, np.random.default_rng(seed))
        everything = np.arange(len(data))
        splits = [(np.setdiff1d(everything, f), f) for f in folds]

    accuracies = []
    for i, (tr, te) in enumerate(splits):
        if te.size == 0:
            raise DegenerateDataError(f"split {i}: empty test part")
        if spec.kind != "knn" and np.unique(data.labels[tr]).size < 2:
            raise DegenerateDataError(f"split {i}: training part holds a single class")
        Xtr, Xte = data.features[tr], data.features[te]
        if standardize:
            st = standardizer_fit(Xtr)
            Xtr, Xte = standardizer_apply(st, Xtr), standardizer_apply(st, Xte)
        model = train(spec, Dataset(Xtr, data.labels[tr]))
        accuracies.append(float(np.mean(predict(model, Xte) == data.labels[te])))

    flags = ()
    if len(accuracies) == 1:
        std, flags = 0.0, ("std",)
    else:
        std = statistics.stdev(accuracies)
    mean = statistics.fmean(accuracies)
    # keep mean inside [min, max] even when summation rounds outward
    mean = min(max(mean, min(accuracies)), max(accuracies))
    return CvReport(tuple(accuracies), mean, std, seed, method,
                    test_fraction if method == "mc" else 1.0 / n_splits, flags)


@dataclass(frozen=True)
class Timed:
    result: object
    wall_seconds: float


def time_block(action: Callable[[], object]) -> Timed:
    """Run ``action`` once and measure it on the monotonic performance clock."""
    start = time.perf_counter()
    result = action()
    return Timed(result, time.perf_counter() - start)


@dataclass(frozen=True)
class TimingReport:
    samples: tuple[float, ...]
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"samples": list(self.samples), "mean": self.mean, "std": self.std}


def timing_stats(samples) -> TimingReport:
    s = tuple(float(v) for v in samples)
    if not s:
        raise DataError("no timing samples")
    std = statistics.stdev(s) if len(s) > 1 else 0.0
    return TimingReport(s, statistics.fmean(s), std)


def timing_report(action: Callable[[], object], repeats: int = 5) -> tuple[object, TimingReport]:
    """Time ``repeats`` runs of ``action``; returns the last result and the stats."""
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    runs = [time_block(action) for _ in range(repeats)]
    return runs[-1].result, timing_stats(r.wall_seconds for r in runs)
