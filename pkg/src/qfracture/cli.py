"""Command-line interface.

Commands: ``synth``, ``ingest-check``, ``run``, ``predict``, ``report``.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, DimensionError, FormatError, PipelineError, QFractureError
from .imaging import load_image
from .ingest import ingest
from .pipeline import PipelineConfig, load_bundle, predict_images, run
from .synth import SyntheticSpec, synth_generate, write_synthetic

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("qfracture")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return exit_code_for(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, DimensionError, FormatError, OSError)):
        return EXIT_DATA
    return EXIT_RUNTIME


def _load_config(args) -> PipelineConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
    for key in ("mode", "seed", "out"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    return PipelineConfig.from_dict(d)


def cmd_synth(args) -> int:
    params = {}
    if args.config:
        cfg = _load_config(args)
        params = dict(cfg.dataset.get("synthetic") or {})
    for key in ("n_per_class", "size", "noise"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.seed is not None:
        params["seed"] = args.seed
    spec = SyntheticSpec.from_dict(params)
    out = Path(args.out or "synthetic-data")
    paths = write_synthetic(synth_generate(spec), out)
    print(f"wrote {len(paths)} images to {out}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    cfg = _load_config(args) if args.config else None
    path = args.path or (cfg.dataset.get("path") if cfg else None)
    if not path:
        raise ConfigError("give a dataset directory or a config with dataset.path")
    from .pipeline import derive_seed

    seed = cfg.seed if cfg else (args.seed or 0)
    fractions = cfg.split if cfg else (0.8, 0.1, 0.1)
    report = ingest(path, fractions, derive_seed(seed, "split"))
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run(cfg)
    for branch, bm in result.metrics["branches"].items():
        for name, entry in bm["models"].items():
            s = entry["test"]["scores"]
            print(f"{branch:9s} {name:10s} accuracy={s['accuracy']:.4f} f1={s['f1']:.4f} kappa={s['kappa']:.4f}")
    print(f"reports written to {result.out}")
    return EXIT_OK


def _image_paths(inputs) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.rglob("*") if q.is_file() and not q.name.startswith(".")))
        elif p.is_file():
            paths.append(p)
        else:
            raise DataError(f"no such file or directory: {p}")
    if not paths:
        raise DataError("no input images given")
    return paths


def cmd_predict(args) -> int:
    if not args.model:
        raise ConfigError("predict needs --model <bundle.json>")
    bundle = load_bundle(args.model)
    paths = _image_paths(args.inputs)
    images = [load_image(p) for p in paths]
    branch, model, labels, scores = predict_images(bundle, images, args.branch, args.classifier)
    w = csv.writer(sys.stdout)
    w.writerow(["file", "branch", "model", "score", "label"])
    for p, s, y in zip(paths, scores, labels):
        w.writerow([str(p), branch, model, repr(float(s)), "fractured" if y else "normal"])
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out or (_load_config(args).out if args.config else "qfracture-out"))
    metrics_path = out / "metrics.json"
    if not metrics_path.exists():
        raise DataError(f"{out} holds no metrics.json; run the pipeline first")
    for table in sorted(out.glob("table*.csv")):
        print(f"== {table.name}")
        with open(table, newline="") as fh:
            rows = list(csv.reader(fh))
        widths = [max(len(_fmt(r[i])) for r in rows) for i in range(len(rows[0]))]
        for r in rows:
            print("  ".join(_fmt(c).ljust(w) for c, w in zip(r, widths)))
        print()
    metrics = json.loads(metrics_path.read_text())
    if "comparison" in metrics:
        primary = metrics["comparison"]["primary_model"]
        delta = metrics["comparison"]["models"][primary]["accuracy"]["delta"]
        print(f"quantum ablation ({primary}): hybrid - classical accuracy = {delta:+.4f}")
    return EXIT_OK


def _fmt(cell: str) -> str:
    try:
        v = float(cell)
    except ValueError:
        return cell
    return f"{v:.4g}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfracture", description="Hybrid quantum-classical fracture classification")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        if mode:
            p.add_argument("--mode", choices=("classical", "hybrid", "both"), help="feature branch(es) to run")

    p = sub.add_parser("synth", help="write a synthetic fractured/normal image set")
    common(p)
    p.add_argument("--n-per-class", dest="n_per_class", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest-check", help="validate a dataset folder and show split counts")
    common(p)
    p.add_argument("path", nargs="?", help="dataset directory (defaults to dataset.path of --config)")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("run", help="train and evaluate, writing reports to --out")
    common(p, mode=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("predict", help="classify images with a saved model bundle")
    p.add_argument("--model", help="model.json written by 'run'")
    p.add_argument("--branch", choices=("classical", "hybrid"))
    p.add_argument("--classifier", help="model name inside the bundle (default: svm)")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="print the tables of a finished run")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except QFractureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug or an environment failure
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
