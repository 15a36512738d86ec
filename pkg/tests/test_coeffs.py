import numpy as np
import pytest
from numpy.testing import assert_allclose

from dielspheres.coeffs import (
    EXPANSION,
    FULL,
    PROJECTION,
    REDUCED,
    CoeffVector,
    load_coeff_vector,
    save_coeff_vector,
)


def test_shapes_and_tags():
    v = CoeffVector.zeros(3, 4, FULL)
    assert v.values.shape == (4 * 16,)
    r = CoeffVector.zeros(3, 4, REDUCED)
    assert r.values.shape == (4 * 15,)
    with pytest.raises(ValueError):
        CoeffVector(np.zeros(5), 3, 4, FULL)
    with pytest.raises(ValueError):
        CoeffVector(np.zeros(64), 3, 4, "neither")


def test_representation_roundtrip():
    rng = np.random.default_rng(0)
    radii = np.array([1.0, 2.0, 0.5])
    v = CoeffVector(rng.normal(size=3 * 16), 3, 3, FULL, EXPANSION)
    p = v.to_projection(radii)
    assert p.rep == PROJECTION
    assert_allclose(p.per_sphere(), v.per_sphere() * radii[:, None] ** 2)
    back = p.to_expansion(radii)
    assert_allclose(back.values, v.values, rtol=1e-15)


def test_space_conversions():
    rng = np.random.default_rng(1)
    v = CoeffVector(rng.normal(size=2 * 9), 2, 2, FULL, EXPANSION)
    r = v.to_reduced()
    assert r.values.shape == (16,)
    f = r.to_full()
    assert np.all(f.per_sphere()[:, 0] == 0.0)
    assert_allclose(f.per_sphere()[:, 1:], v.per_sphere()[:, 1:])


def test_truncation():
    rng = np.random.default_rng(2)
    v = CoeffVector(rng.normal(size=1 * 16), 3, 1, FULL, EXPANSION)
    t = v.truncated(1)
    assert t.lmax == 1 and t.values.shape == (4,)
    assert_allclose(t.values, v.values[:4])
    with pytest.raises(ValueError):
        v.truncated(5)


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    v = CoeffVector(rng.normal(size=5 * 35), 5, 5, REDUCED, PROJECTION)
    path = tmp_path / "vec.bin"
    save_coeff_vector(path, v)
    w = load_coeff_vector(path)
    assert w.lmax == 5 and w.nspheres == 5
    assert w.space == REDUCED and w.rep == PROJECTION
    assert np.array_equal(w.values, v.values)


def test_binary_layout_is_little_endian_float64(tmp_path):
    v = CoeffVector(np.array([1.5, -2.25, 0.0, 8.0]), 1, 1, FULL, EXPANSION)
    path = tmp_path / "vec.bin"
    save_coeff_vector(path, v)
    raw = path.read_bytes()
    assert raw[:4] == b"DSPC"
    assert np.frombuffer(raw[20:], dtype="<f8").tolist() == [1.5, -2.25, 0.0, 8.0]


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_coeff_vector(path)
