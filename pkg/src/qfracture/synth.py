"""Synthetic radiograph-like images for desk-scale experiments.

A "normal" image is a smooth bright elongated band (a bone shaft) on a dark
background; a "fractured" image is the same band crossed by a dark
transverse gap.  Band angle, position and break location are jittered per
image, and Gaussian pixel noise is added last.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

CLASS_NAMES = ("normal", "fractured")


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 200
    size: int = 64
    band_width: float = 12.0
    band_length: float = 0.85       # fraction of the image size
    band_level: float = 0.8
    background: float = 0.15
    break_thickness: float = 6.0
    break_contrast: float = 1.0     # fraction of the band brightness removed in the gap
    break_jitter: float = 4.0       # px, along the band
    angle_jitter: float = 6.0       # degrees
    position_jitter: float = 3.0    # px
    noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 0:
            raise ConfigError("n_per_class must be non-negative")
        if self.size < 8:
            raise ConfigError("size must be at least 8 pixels")
        if not 0 <= self.background < self.band_level <= 1:
            raise ConfigError("need 0 <= background < band_level <= 1")
        if not 0 <= self.break_contrast <= 1:
            raise ConfigError("break_contrast must lie in [0, 1]")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        for name in ("band_width", "break_thickness"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SyntheticSet:
    images: list
    labels: np.ndarray
    geometry: list      # per image: centre, angle, break offset along the band

    def __len__(self):
        return len(self.images)


def _soft_box(t, half, softness=0.75):
    """1 inside ``|t| < half`` falling smoothly to 0 over about a pixel."""
    return 1.0 / (1.0 + np.exp((np.abs(t) - half) / softness))


def render(spec: SyntheticSpec, centre, angle_deg, break_offset, fractured: bool, rng=None):
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    theta = math.radians(angle_deg)
    dx, dy = xx - centre[0], yy - centre[1]
    along = dx * math.sin(theta) + dy * math.cos(theta)
    across = dx * math.cos(theta) - dy * math.sin(theta)
    band = _soft_box(across, spec.band_width / 2) * _soft_box(along, spec.band_length * n / 2)
    if fractured:
        band = band * (1.0 - spec.break_contrast * _soft_box(along - break_offset, spec.break_thickness / 2))
    img = spec.background + (spec.band_level - spec.background) * band
    if spec.noise > 0 and rng is not None:
        img = img + rng.normal(0.0, spec.noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def break_region(spec: SyntheticSpec, geometry: dict) -> np.ndarray:
    """Boolean mask of the band core around the (actual or would-be) break."""
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    theta = math.radians(geometry["angle"])
    dx, dy = xx - geometry["centre"][0], yy - geometry["centre"][1]
    along = dx * math.sin(theta) + dy * math.cos(theta) - geometry["break_offset"]
    across = dx * math.cos(theta) - dy * math.sin(theta)
    return (np.abs(along) <= spec.break_thickness / 2 - 1) & (np.abs(across) <= spec.band_width / 2 - 1)


def synth_generate(spec: SyntheticSpec) -> SyntheticSet:
    """``n_per_class`` normal images followed by ``n_per_class`` fractured ones.

    Image ``i`` is drawn from the ``i``-th child of ``SeedSequence(seed)``, so
    generation is reproducible and independent of the total count.
    """
    total = 2 * spec.n_per_class
    images, labels, geometry = [], [], []
    children = np.random.SeedSequence(spec.seed).spawn(total)
    mid = (spec.size - 1) / 2
    for i, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        label = int(i >= spec.n_per_class)
        centre = (mid + rng.uniform(-1, 1) * spec.position_jitter,
                  mid + rng.uniform(-1, 1) * spec.position_jitter)
        angle = rng.uniform(-1, 1) * spec.angle_jitter
        offset = rng.uniform(-1, 1) * spec.break_jitter
        geo = {"centre": centre, "angle": angle, "break_offset": offset}
        images.append(render(spec, centre, angle, offset, bool(label), rng))
        labels.append(label)
        geometry.append(geo)
    return SyntheticSet(images, np.asarray(labels, dtype=np.int64), geometry)


def write_synthetic(data: SyntheticSet, root) -> list[Path]:
    """Write a flat ``<root>/<normal|fractured>/<class>_<nnnn>.png`` layout."""
    from .imaging import save_image

    root = Path(root)
    paths = []
    counters = {0: 0, 1: 0}
    for name in CLASS_NAMES:
        (root / name).mkdir(parents=True, exist_ok=True)
    for img, label in zip(data.images, data.labels):
        name = CLASS_NAMES[label]
        path = root / name / f"{name}_{counters[label]:04d}.png"
        counters[label] += 1
        save_image(img, path)
        paths.append(path)
    return paths
