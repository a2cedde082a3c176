import logging

import numpy as np
import pytest

from qfracture.errors import ConfigError, IngestError
from qfracture.imaging import save_image
from qfracture.ingest import ingest, split_counts, stratified_split
from qfracture.synth import SyntheticSpec, break_region, synth_generate, write_synthetic


def test_empty_request_gives_empty_set():
    data = synth_generate(SyntheticSpec(n_per_class=0))
    assert len(data) == 0 and data.labels.size == 0


def test_generation_is_pixel_identical_under_same_seed():
    a = synth_generate(SyntheticSpec(n_per_class=4, seed=5))
    b = synth_generate(SyntheticSpec(n_per_class=4, seed=5))
    c = synth_generate(SyntheticSpec(n_per_class=4, seed=6))
    assert all(np.array_equal(x, y) for x, y in zip(a.images, b.images))
    assert not np.array_equal(a.images[0], c.images[0])
    assert a.labels.tolist() == [0] * 4 + [1] * 4


def test_images_are_valid_grayscale():
    data = synth_generate(SyntheticSpec(n_per_class=3, size=40, noise=0.2))
    for img in data.images:
        assert img.shape == (40, 40)
        assert img.min() >= 0.0 and img.max() <= 1.0


@pytest.mark.parametrize("seed", range(3))
def test_break_region_threshold_separates_classes_without_noise(seed):
    spec = SyntheticSpec(n_per_class=30, noise=0.0, seed=seed)
    data = synth_generate(spec)
    means = np.array([img[break_region(spec, g)].mean() for img, g in zip(data.images, data.geometry)])
    threshold = (spec.band_level + spec.background) / 2
    assert np.array_equal((means < threshold).astype(int), data.labels)


def test_synthetic_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(noise=-1.0)
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"colour": "red"})
    spec = SyntheticSpec(n_per_class=3)
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec


def test_split_counts_floor_val_and_test():
    assert split_counts(50, (0.8, 0.1, 0.1)) == (40, 5, 5)
    assert split_counts(7, (0.8, 0.1, 0.1)) == (7, 0, 0)
    assert split_counts(19, (0.6, 0.2, 0.2)) == (13, 3, 3)
    with pytest.raises(ConfigError):
        split_counts(10, (0.5, 0.5, 0.1))
    with pytest.raises(ConfigError):
        split_counts(10, (1.0, 0.0, 0.0))


def test_stratified_split_partitions():
    labels = np.r_[np.zeros(33, int), np.ones(21, int)]
    parts = stratified_split(labels, (0.8, 0.1, 0.1), seed=2)
    joined = np.sort(np.concatenate(list(parts.values())))
    assert np.array_equal(joined, np.arange(54))
    assert np.sum(labels[parts["test"]] == 0) == 3 and np.sum(labels[parts["test"]] == 1) == 2


def _flat(tmp_path, n=50):
    write_synthetic(synth_generate(SyntheticSpec(n_per_class=n, size=16)), tmp_path / "flat")
    return tmp_path / "flat"


def test_flat_layout_split_and_determinism(tmp_path):
    root = _flat(tmp_path)
    rep = ingest(root, (0.8, 0.1, 0.1), seed=4)
    assert rep.layout == "flat"
    sizes = {k: len(v) for k, v in rep.splits.items()}
    assert sizes == {"train": 80, "val": 10, "test": 10}
    again = ingest(root, (0.8, 0.1, 0.1), seed=4)
    for s in rep.splits:
        assert rep.splits[s].names == again.splits[s].names
    other = ingest(root, (0.8, 0.1, 0.1), seed=5)
    assert other.splits["test"].names != rep.splits["test"].names


def test_pre_split_layout_counts_match_folders(tmp_path):
    counts = {"train": (4, 3), "val": (1, 2), "test": (2, 2)}
    rng = np.random.default_rng(0)
    for split, (n_norm, n_frac) in counts.items():
        for cls, n in (("normal", n_norm), ("fractured", n_frac)):
            d = tmp_path / split / cls
            d.mkdir(parents=True)
            for i in range(n):
                save_image(rng.random((8, 8)), d / f"img_{n - i}.png")
    rep = ingest(tmp_path)
    assert rep.layout == "pre-split"
    for split, (n_norm, n_frac) in counts.items():
        assert rep.counts()[split] == {"normal": n_norm, "fractured": n_frac}
    names = [p.rsplit("/", 1)[1] for p in rep.splits["train"].names[:4]]
    assert names == sorted(names)


def test_unreadable_files_are_skipped_and_counted(tmp_path, caplog):
    root = _flat(tmp_path, 5)
    (root / "normal" / "zz_broken.png").write_bytes(b"not a png")
    with caplog.at_level(logging.WARNING):
        rep = ingest(root)
    assert len(rep.skipped) == 1 and rep.to_dict()["skipped"] == 1
    assert "zz_broken.png" in caplog.text
    assert sum(len(v) for v in rep.splits.values()) == 10


def test_empty_class_folder_is_named(tmp_path):
    root = _flat(tmp_path, 3)
    for p in (root / "fractured").iterdir():
        p.unlink()
    with pytest.raises(IngestError, match="fractured"):
        ingest(root)
    with pytest.raises(IngestError):
        ingest(tmp_path / "missing")
