import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qfracture import imaging
from qfracture.errors import ConfigError
from qfracture.imaging import PreprocessConfig

import oracles

unit_images = arrays(np.float64, st.tuples(st.integers(8, 20), st.integers(8, 20)),
                     elements=st.floats(0, 1, allow_nan=False))


def brute_gaussian(img, sigma, size):
    r = size // 2
    h, w = img.shape
    out = np.zeros_like(img)
    weights = {}
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            weights[dy, dx] = math.exp(-(dy * dy + dx * dx) / (2 * sigma * sigma))
    total = sum(weights.values())
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for (dy, dx), wgt in weights.items():
                yy = min(max(y + dy, 0), h - 1)
                xx = min(max(x + dx, 0), w - 1)
                acc += wgt * img[yy, xx]
            out[y, x] = acc / total
    return out


def brute_median(img, window):
    r = window // 2
    h, w = img.shape
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            vals = sorted(img[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)]
                          for dy in range(-r, r + 1) for dx in range(-r, r + 1))
            out[y, x] = vals[len(vals) // 2]
    return out


def test_gaussian_constant_image_fixed():
    img = np.full((12, 9), 0.5)
    np.testing.assert_allclose(imaging.gaussian_filter(img, 1.0, 5), img, atol=1e-15)


def test_gaussian_impulse_reproduces_kernel():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = imaging.gaussian_filter(img, 1.5, 7)
    xs = np.arange(-3, 4)
    k2 = np.exp(-(xs[:, None] ** 2 + xs[None, :] ** 2) / (2 * 1.5 ** 2))
    k2 /= k2.sum()
    np.testing.assert_allclose(out[7:14, 7:14], k2, atol=1e-15)
    assert np.all(out[:7] == 0) and np.all(out[:, 14:] == 0)


def test_gaussian_matches_brute_force():
    img = np.random.default_rng(0).uniform(size=(9, 11))
    np.testing.assert_allclose(imaging.gaussian_filter(img, 1.2, 5), brute_gaussian(img, 1.2, 5), atol=1e-13)


def test_gaussian_preserves_mean_in_interior_dominated_image():
    img = np.zeros((64, 64))
    img[20:44, 20:44] = np.random.default_rng(1).uniform(size=(24, 24))
    assert abs(imaging.gaussian_filter(img, 1.0, 5).mean() - img.mean()) < 1e-6


def test_even_kernel_rejected():
    img = np.zeros((5, 5))
    with pytest.raises(ConfigError):
        imaging.gaussian_filter(img, 1.0, 4)
    with pytest.raises(ConfigError):
        imaging.median_filter(img, 2)


def test_median_constant_and_salt():
    img = np.full((7, 7), 0.3)
    np.testing.assert_array_equal(imaging.median_filter(img, 3), img)
    salt = np.zeros((7, 7))
    salt[3, 3] = 1.0
    assert imaging.median_filter(salt, 3)[3, 3] == 0.0


def test_median_matches_brute_force_and_fixes_constant_regions():
    img = np.random.default_rng(2).uniform(size=(5, 5))
    once = imaging.median_filter(img, 3)
    np.testing.assert_array_equal(once, brute_median(img, 3))
    patch = np.zeros((9, 9))
    patch[2:7, 2:7] = 0.7
    filtered = imaging.median_filter(patch, 3)
    np.testing.assert_array_equal(imaging.median_filter(filtered, 3), filtered)


@pytest.mark.parametrize("value", [0.0, 0.2, 0.5, 1.0])
@pytest.mark.parametrize("clip", [2.0, math.inf])
def test_clahe_constant_stays_constant(value, clip):
    out = imaging.clahe(np.full((32, 32), value), (4, 4), clip)
    assert np.ptp(out) == 0.0


def test_clahe_two_level_pushed_to_extremes():
    img = np.full((16, 16), 0.25)
    img[:, 8:] = 0.75
    out = imaging.clahe(img, (1, 1), 1000.0)
    # levels 64 and 191 each hold half the pixels: cdf_min = 128 of 256
    # low -> (128-128)/(256-128) = 0, high -> (256-128)/128 = 1
    assert np.all(out[:, :8] == 0.0)
    assert np.all(out[:, 8:] == 1.0)


def test_clahe_single_tile_no_clip_is_global_equalization():
    img = np.random.default_rng(3).beta(2, 5, size=(40, 30))
    levels = np.rint(img * 255).astype(int)
    np.testing.assert_allclose(imaging.clahe(img, (1, 1), math.inf), oracles.global_hist_equalize(levels), atol=1e-15)


def test_clahe_clip_limits_contrast_gain():
    img = np.random.default_rng(4).normal(0.5, 0.02, size=(64, 64)).clip(0, 1)
    loose = imaging.clahe(img, (2, 2), math.inf)
    tight = imaging.clahe(img, (2, 2), 1.5)
    assert np.ptp(tight) < np.ptp(loose)


def test_clahe_rejects_small_image():
    with pytest.raises(ConfigError):
        imaging.clahe(np.zeros((4, 4)), (8, 8), 2.0)


def test_clahe_tiles_blend_continuously():
    # a left-to-right ramp stays monotone when per-tile maps are interpolated
    img = np.tile(np.linspace(0, 1, 64), (64, 1))
    out = imaging.clahe(img, (4, 4), 2.0)
    assert np.all(np.diff(out[32]) >= -1e-12)


def test_normalize_cases():
    img = np.linspace(0.2, 0.8, 20).reshape(4, 5)
    out = imaging.normalize(img)
    assert out.min() == 0.0 and out.max() == 1.0
    full = np.linspace(0, 1, 20).reshape(4, 5)
    np.testing.assert_allclose(imaging.normalize(full), full, atol=1e-15)
    np.testing.assert_array_equal(imaging.normalize(np.full((3, 3), 0.4)), np.zeros((3, 3)))


def test_canny_uniform_image_empty():
    assert imaging.canny(np.full((20, 20), 0.6)).sum() == 0


def test_canny_vertical_step_single_line():
    img = np.zeros((20, 20))
    img[:, 10:] = 1.0
    edges = imaging.canny(img, 0.1, 0.3)
    assert set(np.unique(edges)) <= {0.0, 1.0}
    for row in edges:
        cols = np.flatnonzero(row)
        assert len(cols) == 1 and abs(cols[0] - 10) <= 1


def test_canny_edge_count_monotone_in_high():
    rng = np.random.default_rng(6)
    img = imaging.gaussian_filter(rng.uniform(size=(48, 48)), 2.0, 7)
    img[12:36, 12:36] = np.clip(img[12:36, 12:36] + 0.4, 0, 1)
    counts = [imaging.canny(img, 0.02, high).sum() for high in (0.05, 0.1, 0.2)]
    assert counts[0] >= counts[1] >= counts[2]


def test_canny_threshold_order():
    with pytest.raises(ConfigError):
        imaging.canny(np.zeros((8, 8)), 0.3, 0.3)


def test_flips_are_involutions():
    img = np.random.default_rng(7).uniform(size=(10, 13))
    cfg = PreprocessConfig(augment_ops=[{"op": "hflip"}])
    once = imaging.augment(img, cfg)[0]
    np.testing.assert_array_equal(imaging.augment(once, cfg)[0], img)
    cfg = PreprocessConfig(augment_ops=[{"op": "vflip"}])
    np.testing.assert_array_equal(imaging.augment(imaging.augment(img, cfg)[0], cfg)[0], img)


def test_identity_augmentations():
    img = np.random.default_rng(8).uniform(size=(10, 13))
    cfg = PreprocessConfig(augment_ops=[{"op": "rotate", "degrees": 0.0},
                                        {"op": "contrast", "factor": 1.0},
                                        {"op": "scale", "factor": 1.0}])
    for variant in imaging.augment(img, cfg):
        np.testing.assert_array_equal(variant, img)


def test_augment_deterministic_per_seed():
    img = np.random.default_rng(9).uniform(size=(16, 16))
    cfg = PreprocessConfig(augment_seed=5)
    a = imaging.augment(img, cfg)
    b = imaging.augment(img, PreprocessConfig(augment_seed=5))
    assert len(a) == len(cfg.augment_ops)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()
    c = imaging.augment(img, PreprocessConfig(augment_seed=6))
    assert c[1].tobytes() != a[1].tobytes()


def test_rotate_90_permutes_square():
    img = np.random.default_rng(10).uniform(size=(9, 9))
    np.testing.assert_allclose(imaging.rotate(img, 90.0), np.rot90(img, -1), atol=1e-12)


def test_to_raw_vector_contract():
    img = np.random.default_rng(11).uniform(size=(4, 4))
    cfg = PreprocessConfig(resize_to=(4, 4), edge_blend=0.0, clahe_tiles=(1, 1))
    np.testing.assert_array_equal(imaging.to_raw_vector(img, cfg), img.ravel())
    cfg = PreprocessConfig(resize_to=(7, 5))
    vec = imaging.to_raw_vector(np.random.default_rng(12).uniform(size=(30, 20)), cfg)
    assert vec.shape == (35,)
    assert vec.min() >= 0 and vec.max() <= 1


def test_resize_corner_aligned():
    img = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = imaging.resize(img, (3, 3))
    np.testing.assert_allclose(out, [[0, 0.5, 1], [0.5, 0.5, 0.5], [1, 0.5, 0]])


@settings(max_examples=25, deadline=None)
@given(unit_images)
def test_every_stage_stays_in_unit_range(img):
    cfg = PreprocessConfig(clahe_tiles=(2, 2), resize_to=(6, 6))
    stages = [
        imaging.gaussian_filter(img), imaging.median_filter(img), imaging.clahe(img, (2, 2), 2.0),
        imaging.normalize(img), imaging.canny(img), imaging.condition(img, cfg),
        imaging.to_raw_vector(img, cfg), *imaging.augment(img, cfg),
    ]
    for out in stages:
        assert out.min() >= 0.0 and out.max() <= 1.0
    assert set(np.unique(imaging.canny(img))) <= {0.0, 1.0}


def test_config_validation_and_round_trip():
    cfg = PreprocessConfig()
    assert PreprocessConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        PreprocessConfig(canny_low=0.5, canny_high=0.2)
    with pytest.raises(ConfigError):
        PreprocessConfig(edge_blend=1.5)
    with pytest.raises(ConfigError):
        PreprocessConfig(augment_ops=[{"op": "shear"}])
    with pytest.raises(ConfigError):
        PreprocessConfig.from_dict({"bogus": 1})


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(13).uniform(size=(6, 5))
    imaging.save_image(img, tmp_path / "a.png")
    back = imaging.load_image(tmp_path / "a.png")
    np.testing.assert_allclose(back, np.rint(img * 255) / 255, atol=0)


def test_rgb_png_uses_channel_average(tmp_path):
    from PIL import Image
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0] = 30
    rgb[..., 1] = 60
    rgb[..., 2] = 90
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "c.png")
    np.testing.assert_allclose(imaging.load_image(tmp_path / "c.png"), 60 / 255)
