import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qfracture.errors import DataError, DimensionError
from qfracture.fusion import (
    Standardizer,
    fuse,
    read_feature_csv,
    standardizer_apply,
    standardizer_fit,
    write_feature_csv,
)

vec8 = arrays(np.float64, 8, elements=st.floats(-1e6, 1e6, allow_nan=False))


def test_fuse_concatenates():
    out = fuse(np.arange(1, 9), np.arange(9, 17))
    np.testing.assert_array_equal(out, np.arange(1, 17))
    np.testing.assert_array_equal(fuse(np.zeros(8), np.zeros(8)), np.zeros(16))


@given(vec8, vec8)
def test_fuse_layout_bijection(a, b):
    out = fuse(a, b)
    assert out.shape == (16,)
    np.testing.assert_array_equal(out[:8], a)
    np.testing.assert_array_equal(out[8:], b)


def test_fuse_rejects_wrong_lengths():
    with pytest.raises(DimensionError):
        fuse(np.zeros(7), np.zeros(8))
    with pytest.raises(DimensionError):
        fuse(np.zeros(8), np.zeros(9))


def test_fuse_batch():
    out = fuse(np.zeros((3, 8)), np.ones((3, 8)))
    assert out.shape == (3, 16)


def test_standardizer_repeated_row_and_constant_column():
    row = np.arange(16.0)
    s = standardizer_fit(np.vstack([row, row, row]))
    np.testing.assert_array_equal(standardizer_apply(s, row), np.zeros(16))
    assert s.degenerate.all()


def test_standardizer_moments():
    X = np.random.default_rng(0).normal(3.0, 5.0, size=(50, 16))
    X[:, 4] = 2.5
    s = standardizer_fit(X)
    Z = standardizer_apply(s, X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
    stds = Z.std(axis=0)
    np.testing.assert_allclose(np.delete(stds, 4), 1, atol=1e-12)
    np.testing.assert_array_equal(Z[:, 4], 0)
    assert s.degenerate.tolist() == [i == 4 for i in range(16)]


def test_standardizer_affine_inverse():
    X = np.random.default_rng(1).normal(size=(20, 16))
    s = standardizer_fit(X)
    v = np.random.default_rng(2).normal(size=16)
    np.testing.assert_allclose(standardizer_apply(s, v) * s.stds + s.means, v, atol=1e-12)


def test_standardizer_needs_two_rows():
    with pytest.raises(DataError):
        standardizer_fit(np.zeros((1, 16)))


def test_standardizer_round_trip():
    s = standardizer_fit(np.random.default_rng(3).normal(size=(5, 16)))
    back = Standardizer.from_dict(s.to_dict())
    assert back.means.tobytes() == s.means.tobytes() and back.stds.tobytes() == s.stds.tobytes()


def test_feature_csv_round_trip(tmp_path):
    X = np.random.default_rng(4).normal(size=(5, 16))
    y = np.array([0, 1, 1, 0, 1])
    write_feature_csv(tmp_path / "f.csv", X, y, 8, 8)
    back, labels, header = read_feature_csv(tmp_path / "f.csv")
    assert header == [f"pca_{i}" for i in range(8)] + [f"q_{i}" for i in range(8)] + ["label"]
    np.testing.assert_array_equal(back, X)
    np.testing.assert_array_equal(labels, y)
