"""Labelled image loading and train/val/test splitting.

Two directory layouts are understood::

    root/<train|val|test>/<fractured|normal>/*.png     pre-split
    root/<fractured|normal>/*                           flat, split here

Files are read in lexicographic filename order.  Flat layouts are split per
class by a seeded shuffle: ``floor(fraction * n)`` images go to val and to
test, the remainder to train.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError
from .imaging import load_image

log = logging.getLogger(__name__)

CLASS_DIRS = {"normal": 0, "fractured": 1}
SPLITS = ("train", "val", "test")
SPLIT_ALIASES = {"train": ("train",), "val": ("val", "validation"), "test": ("test",)}


@dataclass
class ImageSet:
    images: list = field(default_factory=list)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    names: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)

    def subset(self, idx) -> "ImageSet":
        return ImageSet([self.images[i] for i in idx], self.labels[np.asarray(idx, dtype=np.int64)],
                        [self.names[i] for i in idx])

    def class_counts(self) -> dict:
        return {name: int(np.sum(self.labels == c)) for name, c in CLASS_DIRS.items()}


@dataclass
class IngestReport:
    splits: dict
    layout: str
    skipped: list = field(default_factory=list)

    def counts(self) -> dict:
        return {k: v.class_counts() for k, v in self.splits.items()}

    def to_dict(self) -> dict:
        return {"layout": self.layout, "counts": self.counts(),
                "skipped": len(self.skipped), "skipped_files": [str(p) for p in self.skipped]}


def check_fractions(fractions) -> tuple[float, float, float]:
    f = tuple(float(v) for v in fractions)
    if len(f) != 3 or min(f) <= 0 or abs(sum(f) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {list(fractions)}")
    return f


def split_counts(n: int, fractions) -> tuple[int, int, int]:
    """``(train, val, test)`` sizes for one class of ``n`` items."""
    _, fv, ft = check_fractions(fractions)
    n_val = math.floor(fv * n + 1e-9)
    n_test = math.floor(ft * n + 1e-9)
    return n - n_val - n_test, n_val, n_test


def stratified_split(labels, fractions, seed: int) -> dict:
    """Index arrays for train/val/test, stratified by class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = {s: [] for s in SPLITS}
    for c in sorted(CLASS_DIRS.values()):
        members = rng.permutation(np.flatnonzero(labels == c))
        n_tr, n_val, _ = split_counts(members.size, fractions)
        parts["val"].append(members[:n_val])
        parts["test"].append(members[n_val:members.size - n_tr])
        parts["train"].append(members[members.size - n_tr:])
    return {s: np.sort(np.concatenate(v)).astype(np.int64) for s, v in parts.items()}


def _read_class_dir(folder: Path, label: int, out: ImageSet, skipped: list):
    files = sorted((p for p in folder.iterdir() if p.is_file() and not p.name.startswith(".")),
                   key=lambda p: p.name)
    if not files:
        raise IngestError(f"class folder {folder} is empty")
    loaded = 0
    for p in files:
        try:
            img = load_image(p)
        except Exception as exc:  # Pillow raises a variety of types for bad files
            log.warning("skipping unreadable image %s: %s", p, exc)
            skipped.append(p)
            continue
        out.images.append(img)
        out.names.append(str(p))
        loaded += 1
    out.labels = np.concatenate([out.labels, np.full(loaded, label, dtype=np.int64)])
    if loaded == 0:
        raise IngestError(f"class folder {folder} holds no readable images")


def _read_labelled(root: Path, skipped: list) -> ImageSet:
    out = ImageSet()
    for name, label in CLASS_DIRS.items():
        folder = root / name
        if not folder.is_dir():
            raise IngestError(f"missing class folder {folder}")
        _read_class_dir(folder, label, out, skipped)
    return out


def _find_split_dir(root: Path, split: str) -> Path | None:
    for alias in SPLIT_ALIASES[split]:
        if (root / alias).is_dir():
            return root / alias
    return None


def ingest(path, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> IngestReport:
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"dataset directory {root} does not exist")
    skipped: list = []
    split_dirs = {s: _find_split_dir(root, s) for s in SPLITS}
    if split_dirs["train"] is not None:
        if split_dirs["test"] is None:
            raise IngestError(f"pre-split dataset {root} has no test folder")
        splits = {s: (_read_labelled(d, skipped) if d is not None else ImageSet()) for s, d in split_dirs.items()}
        return IngestReport(splits, "pre-split", skipped)
    if not any((root / c).is_dir() for c in CLASS_DIRS):
        raise IngestError(f"{root} holds neither train/val/test nor fractured/normal folders")
    check_fractions(fractions)
    everything = _read_labelled(root, skipped)
    idx = stratified_split(everything.labels, fractions, seed)
    return IngestReport({s: everything.subset(idx[s]) for s in SPLITS}, "flat", skipped)
