"""End-to-end experiment orchestration.

``run`` takes a :class:`PipelineConfig` through ingest (or synthesis),
conditioning, training-only augmentation, PCA, optional quantum feature
extraction, fusion, standardisation, training and evaluation, then writes
every report into the output directory in one step.

Output files
------------
config.json                  resolved configuration
metrics.json                 all scores, confusion counts, CV statistics and the
                             classical/hybrid comparison (no timings, so it is
                             reproducible byte for byte)
timings.json                 training, evaluation and feature-extraction timings
model.json                   versioned bundle for ``predict``
features_<branch>_<split>.csv
curves_<branch>_<model>_<roc|pr>.csv
table1_<branch>.csv          per-model training/evaluation time, accuracy, MCVS
table2.csv                   classical vs hybrid for the primary model (``both`` mode)
table3.csv                   feature-extraction time statistics per branch
"""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import shutil
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifiers import (
    Dataset,
    ModelSpec,
    decision_score,
    model_from_dict,
    model_to_dict,
    predict,
    train,
)
from .errors import ConfigError, DataError, FormatError, PipelineError, QFractureError, VersionError
from .fusion import (
    Standardizer,
    feature_header,
    fuse,
    standardizer_apply,
    standardizer_fit,
    write_feature_csv,
)
from .imaging import PreprocessConfig, augment, condition, to_raw_vector
from .ingest import SPLITS, ImageSet, IngestReport, check_fractions, ingest, stratified_split
from .metrics import evaluate, monte_carlo_cv, time_block, timing_report
from .pca import PcaModel, explained_variance_ratio, pca_fit, pca_transform
from .quantum import CircuitSpec, ObservableSet, extract_quantum_features_batch
from .synth import SyntheticSpec, synth_generate

log = logging.getLogger(__name__)

BUNDLE_VERSION = 1
MODES = ("classical", "hybrid", "both")
DEFAULT_MODELS = ("rforest", "svm", "knn", "gboost", "dtree")
MODEL_LABELS = {
    "rforest": "Random Forest",
    "svm": "SVM",
    "knn": "KNN",
    "gboost": "Gradient Boosting",
    "dtree": "Decision Tree",
}


def derive_seed(master: int, stage: str, *extra: int) -> int:
    """Stage seed from the master seed; independent of the order stages run in."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(stage.encode()), *map(int, extra)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class CvConfig:
    n_splits: int = 10
    test_fraction: float = 0.1
    method: str = "mc"

    def __post_init__(self):
        if self.n_splits < 1:
            raise ConfigError("cv.n_splits must be at least 1")
        if self.method not in ("mc", "kfold"):
            raise ConfigError("cv.method must be 'mc' or 'kfold'")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("cv.test_fraction must lie strictly between 0 and 1")

    def to_dict(self) -> dict:
        return {"n_splits": self.n_splits, "test_fraction": self.test_fraction, "method": self.method}


@dataclass
class PipelineConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    split: tuple = (0.8, 0.1, 0.1)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    pca_k: int = 8
    classical_k: int = 8
    circuit: CircuitSpec = field(default_factory=CircuitSpec)
    observables: ObservableSet | None = None
    models: list = field(default_factory=lambda: [ModelSpec(k) for k in DEFAULT_MODELS])
    mode: str = "hybrid"
    seed: int = 0
    out: str = "qfracture-out"
    standardize: bool = True
    cv: CvConfig | None = field(default_factory=CvConfig)
    timing_repeats: int = 5
    primary_model: str = "svm"

    def __post_init__(self):
        self.split = check_fractions(self.split)
        if self.observables is None:
            self.observables = ObservableSet.default_for(self.circuit.n_qubits)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if set(self.dataset) not in ({"path"}, {"synthetic"}):
            raise ConfigError("dataset must be {'path': dir} or {'synthetic': {...}}")
        if "synthetic" in self.dataset:
            SyntheticSpec.from_dict(self.dataset["synthetic"] or {})
        if self.pca_k < 1 or self.classical_k < 1:
            raise ConfigError("pca_k and classical_k must be positive")
        if self.observables.max_qubit() >= self.circuit.n_qubits:
            raise ConfigError("observables reference qubits outside the circuit")
        if self.pca_k > 2 ** self.circuit.n_qubits:
            raise ConfigError(f"{self.pca_k} PCA features do not fit in {self.circuit.n_qubits} qubits")
        if not self.models:
            raise ConfigError("at least one model is required")
        if self.timing_repeats < 1:
            raise ConfigError("timing_repeats must be at least 1")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def n_quantum(self) -> int:
        return len(self.observables)

    def branches(self) -> tuple[str, ...]:
        return ("classical", "hybrid") if self.mode == "both" else (self.mode,)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "split": list(self.split),
            "preprocess": self.preprocess.to_dict(),
            "pca_k": self.pca_k,
            "classical_k": self.classical_k,
            "circuit": self.circuit.to_dict(),
            "observables": self.observables.to_dict(),
            "models": [m.to_dict() for m in self.models],
            "mode": self.mode,
            "seed": self.seed,
            "out": self.out,
            "standardize": self.standardize,
            "cv": self.cv.to_dict() if self.cv else None,
            "timing_repeats": self.timing_repeats,
            "primary_model": self.primary_model,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "preprocess" in kw:
                kw["preprocess"] = PreprocessConfig.from_dict(kw["preprocess"])
            if "circuit" in kw:
                kw["circuit"] = CircuitSpec.from_dict(kw["circuit"])
            if kw.get("observables") is not None:
                kw["observables"] = ObservableSet.from_dict(kw["observables"])
            if "models" in kw:
                kw["models"] = [m if isinstance(m, ModelSpec) else _model_spec(m) for m in kw["models"]]
            if kw.get("cv") is not None:
                kw["cv"] = CvConfig(**kw["cv"])
            return cls(**kw)
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _model_spec(d) -> ModelSpec:
    if isinstance(d, str):
        return ModelSpec(d)
    return ModelSpec(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


def model_names(specs) -> list[str]:
    """Report names: the kind, suffixed ``_2``, ``_3``... for repeats."""
    seen: dict = {}
    names = []
    for s in specs:
        seen[s.kind] = seen.get(s.kind, 0) + 1
        names.append(s.kind if seen[s.kind] == 1 else f"{s.kind}_{seen[s.kind]}")
    return names


# -- model bundle ------------------------------------------------------------

@dataclass
class Branch:
    n_classical: int
    n_quantum: int
    standardizer: Standardizer | None
    models: dict      # name -> trained model


@dataclass
class Bundle:
    preprocess: PreprocessConfig
    pca: PcaModel
    circuit: CircuitSpec
    observables: ObservableSet
    branches: dict    # "classical" | "hybrid" -> Branch

    def features(self, raw_vectors, branch: str) -> np.ndarray:
        """Fused, standardised features for raw (flattened) image vectors."""
        b = self.branches[branch]
        P = pca_transform(self.pca, np.atleast_2d(raw_vectors))
        return _branch_features(P, b, self.circuit, self.observables)

    def image_vector(self, img) -> np.ndarray:
        return to_raw_vector(condition(img, self.preprocess), self.preprocess)

    def predict(self, raw_vectors, branch: str, model: str):
        m = self.branches[branch].models[model]
        X = self.features(raw_vectors, branch)
        return predict(m, X), decision_score(m, X)

    def to_dict(self) -> dict:
        return {
            "version": BUNDLE_VERSION,
            "preprocess": self.preprocess.to_dict(),
            "pca": self.pca.to_dict(),
            "circuit": self.circuit.to_dict(),
            "observables": self.observables.to_dict(),
            "branches": {
                name: {
                    "n_classical": b.n_classical,
                    "n_quantum": b.n_quantum,
                    "standardizer": b.standardizer.to_dict() if b.standardizer else None,
                    "models": {k: model_to_dict(m) for k, m in b.models.items()},
                }
                for name, b in self.branches.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bundle":
        if not isinstance(d, dict) or "version" not in d:
            raise FormatError("model bundle lacks a version field")
        if d["version"] != BUNDLE_VERSION:
            raise VersionError(f"bundle version {d['version']} is not supported (expected {BUNDLE_VERSION})")
        try:
            branches = {
                name: Branch(
                    int(b["n_classical"]),
                    int(b["n_quantum"]),
                    Standardizer.from_dict(b["standardizer"]) if b["standardizer"] else None,
                    {k: model_from_dict(m) for k, m in b["models"].items()},
                )
                for name, b in d["branches"].items()
            }
            return cls(
                PreprocessConfig.from_dict(d["preprocess"]),
                PcaModel.from_dict(d["pca"]),
                CircuitSpec.from_dict(d["circuit"]),
                ObservableSet.from_dict(d["observables"]),
                branches,
            )
        except VersionError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise FormatError(f"malformed model bundle: {exc!r}") from exc


def save_bundle(bundle: Bundle, path):
    Path(path).write_text(_dumps(bundle.to_dict()))


def load_bundle(path) -> Bundle:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model bundle ({exc})") from exc
    except OSError as exc:
        raise FormatError(f"cannot read model bundle {path}: {exc}") from exc
    return Bundle.from_dict(d)


def _branch_features(P, branch: Branch, circuit, observables) -> np.ndarray:
    classical = P[:, :branch.n_classical]
    if branch.n_quantum:
        Q = extract_quantum_features_batch(P[:, :branch.n_classical], circuit, observables)
        X = fuse(classical, Q, branch.n_classical, branch.n_quantum)
    else:
        X = classical
    return standardizer_apply(branch.standardizer, X) if branch.standardizer else X


# -- run ---------------------------------------------------------------------

@dataclass
class RunResult:
    out: Path
    metrics: dict
    timings: dict
    bundle: Bundle


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def load_dataset(cfg: PipelineConfig) -> IngestReport:
    """Ingest from disk, or synthesise and split in memory."""
    if "path" in cfg.dataset:
        return ingest(cfg.dataset["path"], cfg.split, derive_seed(cfg.seed, "split"))
    params = dict(cfg.dataset["synthetic"] or {})
    params.setdefault("seed", derive_seed(cfg.seed, "synth") % 2 ** 32)
    spec = SyntheticSpec.from_dict(params)
    data = synth_generate(spec)
    names = [f"synthetic_{i:05d}" for i in range(len(data))]
    everything = ImageSet(list(data.images), data.labels, names)
    idx = stratified_split(everything.labels, cfg.split, derive_seed(cfg.seed, "split"))
    return IngestReport({s: everything.subset(idx[s]) for s in SPLITS}, "synthetic")


def _vectors(images, pre: PreprocessConfig) -> np.ndarray:
    return np.array([to_raw_vector(img, pre) for img in images])


def _training_vectors(train: ImageSet, conditioned, cfg: PreprocessConfig, master: int):
    """Raw vectors of the training images followed by their augmented variants."""
    rows, labels, origin = [], [], []
    for i, img in enumerate(conditioned):
        rows.append(to_raw_vector(img, cfg))
        labels.append(train.labels[i])
        origin.append(i)
    base = derive_seed(master, "augment", cfg.augment_seed)
    for i, img in enumerate(conditioned):
        variant_cfg = replace(cfg, augment_seed=derive_seed(base, "image", i))
        for v in augment(img, variant_cfg):
            rows.append(to_raw_vector(v, cfg))
            labels.append(train.labels[i])
            origin.append(i)
    return np.array(rows), np.asarray(labels, dtype=np.int64), np.asarray(origin)


def run(cfg: PipelineConfig, out=None) -> RunResult:
    """Run the configured experiment and write all reports to ``out``.

    Files are written to a scratch directory next to ``out`` and moved into
    place only after every stage succeeded; on failure nothing is left behind.
    """
    out = Path(out if out is not None else cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = out.parent / f".{out.name}.partial"
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir()
    try:
        result = _run(cfg, scratch)
        if out.exists():
            shutil.rmtree(out)
        scratch.rename(out)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    result.out = out
    return result


def _run(cfg: PipelineConfig, out: Path) -> RunResult:
    pre = cfg.preprocess
    timings: dict = {"branches": {}}

    with _stage("ingest"):
        report = load_dataset(cfg)
        splits = report.splits
        if len(splits["train"]) < 2 or len(splits["test"]) == 0:
            raise DataError(f"need at least 2 training and 1 test image, got {report.counts()}")
        if np.unique(splits["train"].labels).size < 2:
            raise DataError("the training split holds a single class")

    with _stage("preprocess"):
        conditioned = {s: [condition(img, pre) for img in splits[s].images] for s in SPLITS}
        Xtr_raw, ytr, origin = _training_vectors(splits["train"], conditioned["train"], pre, cfg.seed)
        raw = {"train": Xtr_raw}
        labels = {"train": ytr}
        for s in ("val", "test"):
            raw[s] = _vectors(conditioned[s], pre) if len(splits[s]) else np.zeros((0, Xtr_raw.shape[1]))
            labels[s] = splits[s].labels

    with _stage("pca"):
        k_fit = max(cfg.pca_k, cfg.classical_k if "classical" in cfg.branches() else 0)
        pca = pca_fit(Xtr_raw, k_fit)
        P = {s: pca_transform(pca, raw[s]) if len(raw[s]) else np.zeros((0, k_fit)) for s in SPLITS}

    metrics: dict = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "layout": report.layout,
        "counts": report.counts(),
        "training_rows_after_augmentation": int(len(ytr)),
        "skipped_files": len(report.skipped),
        "pca": {"k": pca.k, "explained_variance_ratio": explained_variance_ratio(pca).tolist()},
        "branches": {},
    }
    names = model_names(cfg.models)
    bundle_branches = {}
    table3_rows = []

    for branch in cfg.branches():
        n_classical = cfg.classical_k if branch == "classical" else cfg.pca_k
        n_quantum = cfg.n_quantum if branch == "hybrid" else 0
        with _stage(f"features[{branch}]"):
            feats = {}
            for s in SPLITS:
                if not len(P[s]):
                    feats[s] = np.zeros((0, n_classical + n_quantum))
                    continue
                plain = Branch(n_classical, n_quantum, None, {})
                feats[s] = _branch_features(P[s], plain, cfg.circuit, cfg.observables)
                write_feature_csv(out / f"features_{branch}_{s}.csv", feats[s], labels[s], n_classical, n_quantum)
            scaler = standardizer_fit(feats["train"]) if cfg.standardize else None
            X = {s: standardizer_apply(scaler, f) if scaler and len(f) else f for s, f in feats.items()}
        bundle_branch = Branch(n_classical, n_quantum, scaler, {})

        branch_metrics: dict = {"n_features": n_classical + n_quantum,
                                "columns": feature_header(n_classical, n_quantum)[:-1], "models": {}}
        branch_timings: dict = {"models": {}}
        train_set = Dataset(X["train"], labels["train"])
        for name, spec in zip(names, cfg.models):
            with _stage(f"train[{branch}:{name}]"):
                fit = time_block(lambda: train(spec, train_set))
                model = fit.result
            with _stage(f"evaluate[{branch}:{name}]"):
                ev = time_block(lambda: (predict(model, X["test"]), decision_score(model, X["test"])))
                test_report = evaluate(ev.result[0], ev.result[1], labels["test"])
                entry = {"test": test_report.to_dict()}
                if len(X["val"]):
                    entry["val"] = evaluate(predict(model, X["val"]), decision_score(model, X["val"]),
                                            labels["val"]).to_dict()
                for curve in (test_report.roc, test_report.pr):
                    if curve is not None:
                        curve.write_csv(out / f"curves_{branch}_{name}_{curve.kind}.csv")
            if cfg.cv is not None:
                with _stage(f"cv[{branch}:{name}]"):
                    entry["cv"] = _cross_validate(cfg, spec, feats, labels, origin, name).to_dict()
            bundle_branch.models[name] = model
            branch_metrics["models"][name] = entry
            branch_timings["models"][name] = {"train_seconds": fit.wall_seconds, "eval_seconds": ev.wall_seconds}

        with _stage(f"timing[{branch}]"):
            test_images = splits["test"].images

            def extract():
                Pt = pca_transform(pca, _vectors([condition(im, pre) for im in test_images], pre))
                return _branch_features(Pt, bundle_branch, cfg.circuit, cfg.observables)

            _, rep = timing_report(extract, cfg.timing_repeats)
            branch_timings["extraction"] = {"n_images": len(test_images), **rep.to_dict()}
            primary = _primary_name(cfg, names)
            table3_rows.append([branch, repr(rep.mean), repr(rep.std),
                                branch_metrics["models"][primary]["test"]["scores"]["accuracy"]])

        metrics["branches"][branch] = branch_metrics
        timings["branches"][branch] = branch_timings
        bundle_branches[branch] = bundle_branch
        _write_table1(out / f"table1_{branch}.csv", names, cfg.models, branch_metrics, branch_timings)

    with _stage("report"):
        if cfg.mode == "both":
            metrics["comparison"] = _comparison(metrics, names, _primary_name(cfg, names))
            _write_table2(out / "table2.csv", metrics, timings, _primary_name(cfg, names))
        _write_csv(out / "table3.csv",
                   ["pipeline", "mean_extraction_time_s", "std_extraction_time_s", "classification_accuracy"],
                   table3_rows)
        bundle = Bundle(pre, pca, cfg.circuit, cfg.observables, bundle_branches)
        save_bundle(bundle, out / "model.json")
        (out / "config.json").write_text(_dumps(cfg.to_dict()))
        (out / "metrics.json").write_text(_dumps(metrics))
        (out / "timings.json").write_text(_dumps(timings))
    return RunResult(out, metrics, timings, bundle)


def _primary_name(cfg, names) -> str:
    for name, spec in zip(names, cfg.models):
        if spec.kind == cfg.primary_model:
            return name
    return names[0]


def _cross_validate(cfg, spec, feats, labels, origin, name):
    """MCVS over the un-augmented training and validation rows.

    Augmented copies are left out so no image appears on both sides of a
    split; the standardizer is refit on every training part.
    """
    plain_train = np.arange(len(np.unique(origin)))  # originals precede their variants
    Xcv = np.vstack([feats["train"][plain_train], feats["val"]])
    ycv = np.concatenate([labels["train"][plain_train], labels["val"]])
    cv = cfg.cv
    return monte_carlo_cv(spec, Dataset(Xcv, ycv), cv.n_splits, cv.test_fraction,
                          derive_seed(cfg.seed, "cv"), cv.method, standardize=cfg.standardize)


def _comparison(metrics, names, primary) -> dict:
    """Hybrid minus classical test scores for every model (the quantum ablation)."""
    c, h = metrics["branches"]["classical"]["models"], metrics["branches"]["hybrid"]["models"]
    out = {"primary_model": primary, "models": {}}
    for name in names:
        row = {}
        for key in ("accuracy", "f1", "f2", "kappa"):
            a, b = c[name]["test"]["scores"][key], h[name]["test"]["scores"][key]
            row[key] = {"classical": a, "hybrid": b, "delta": b - a}
        a, b = c[name]["test"]["roc_auc"], h[name]["test"]["roc_auc"]
        row["roc_auc"] = {"classical": a, "hybrid": b, "delta": None if a is None or b is None else b - a}
        out["models"][name] = row
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_table1(path, names, specs, bm, bt):
    rows = []
    for name, spec in zip(names, specs):
        m, t = bm["models"][name], bt["models"][name]
        cv = m.get("cv")
        rows.append([
            MODEL_LABELS[spec.kind] + (name[len(spec.kind):] if name != spec.kind else ""),
            repr(t["train_seconds"]),
            repr(t["eval_seconds"]),
            repr(100.0 * m["test"]["scores"]["accuracy"]),
            repr(100.0 * cv["mean"]) if cv else "",
            repr(100.0 * cv["std"]) if cv else "",
        ])
    _write_csv(path, ["model", "training_time_s", "evaluation_time_s", "accuracy_pct", "mcvs_pct", "mcvs_std_pct"],
               rows)


def _write_table2(path, metrics, timings, primary):
    c = metrics["branches"]["classical"]["models"][primary]["test"]
    h = metrics["branches"]["hybrid"]["models"][primary]["test"]
    tc = timings["branches"]["classical"]["models"][primary]
    th = timings["branches"]["hybrid"]["models"][primary]

    def row(label, a, b):
        delta = "" if a is None or b is None else repr(b - a)
        return [label, "" if a is None else repr(a), "" if b is None else repr(b), delta]

    rows = [row(label, c["scores"][key], h["scores"][key])
            for label, key in (("accuracy", "accuracy"), ("f1_score", "f1"), ("cohen_kappa", "kappa"))]
    rows.append(row("roc_auc", c["roc_auc"], h["roc_auc"]))
    rows.append(row("f2_score", c["scores"]["f2"], h["scores"]["f2"]))
    rows.append(row("training_time_s", tc["train_seconds"], th["train_seconds"]))
    rows.append(row("evaluation_time_s", tc["eval_seconds"], th["eval_seconds"]))
    _write_csv(path, ["parameter", "classical", "hybrid", "delta"], rows)


def predict_images(bundle: Bundle, images, branch: str | None = None, model: str | None = None):
    """Labels and scores for conditioned-on-the-fly images using a saved bundle."""
    branch = branch or ("hybrid" if "hybrid" in bundle.branches else next(iter(bundle.branches)))
    if branch not in bundle.branches:
        raise ConfigError(f"bundle has no {branch!r} branch; available: {sorted(bundle.branches)}")
    models = bundle.branches[branch].models
    model = model or ("svm" if "svm" in models else next(iter(models)))
    if model not in models:
        raise ConfigError(f"bundle has no model {model!r}; available: {sorted(models)}")
    vectors = np.array([bundle.image_vector(img) for img in images])
    labels, scores = bundle.predict(vectors, branch, model)
    return branch, model, labels, scores


__all__ = [
    "PipelineConfig", "CvConfig", "Bundle", "Branch", "RunResult", "run", "load_dataset",
    "save_bundle", "load_bundle", "derive_seed", "predict_images", "model_names", "QFractureError",
]
