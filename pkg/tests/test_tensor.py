import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triseg import tensor
from triseg.tensor import Shape


def test_new_fill_zeros():
    t = tensor.new(Shape(2, 2, 1), 0.0)
    assert t.shape == (2, 2, 1)
    assert np.all(t == 0.0)


def test_new_fill_value():
    t = tensor.new(Shape(1, 1, 3), 1.5)
    assert list(t.ravel()) == [1.5, 1.5, 1.5]


def test_new_channel1_output_shape():
    t = tensor.new(Shape(100, 100, 25), 0.0)
    assert t.size == 250000
    assert np.all(t == 0.0)


def test_shape_rejects_nonpositive():
    with pytest.raises(ValueError):
        Shape(0, 2, 1)
    with pytest.raises(ValueError):
        Shape(2, -1, 1)


def test_new_rejects_nonfinite_fill():
    with pytest.raises(ValueError):
        tensor.new(Shape(1, 1, 1), np.nan)


def test_get_after_fill():
    t = tensor.new(Shape(2, 2, 1), 7.0)
    assert tensor.get(t, 1, 1, 0) == 7.0


def test_set_get_roundtrip():
    t = tensor.new(Shape(3, 4, 2), 0.0)
    t2 = tensor.set_value(t, 2, 3, 1, 5.5)
    assert tensor.get(t2, 2, 3, 1) == 5.5
    assert tensor.get(t, 2, 3, 1) == 0.0  # original untouched


def test_get_out_of_bounds():
    t = tensor.new(Shape(2, 2, 1), 0.0)
    with pytest.raises(IndexError):
        tensor.get(t, 2, 0, 0)
    with pytest.raises(IndexError):
        tensor.get(t, -1, 0, 0)  # no silent wrapping


def test_map_identity(rng):
    t = rng.random((3, 4, 2)).astype(np.float32)
    np.testing.assert_array_equal(tensor.tmap(t, lambda x: x), t)


def test_map_relu():
    t = np.array([-1.0, 2.0], dtype=np.float32).reshape(1, 2, 1)
    out = tensor.tmap(t, lambda x: np.maximum(x, 0))
    assert list(out.ravel()) == [0.0, 2.0]


def test_zip_self_subtraction(rng):
    t = rng.random((3, 3, 2)).astype(np.float32)
    out = tensor.tzip(t, t, lambda a, b: a - b)
    assert np.all(out == 0.0)


def test_zip_shape_mismatch(rng):
    a = rng.random((2, 2, 1))
    b = rng.random((2, 3, 1))
    with pytest.raises(ValueError):
        tensor.tzip(a, b, lambda x, y: x + y)


def test_map_rejects_nonfinite_input():
    t = np.full((1, 1, 1), np.inf)
    with pytest.raises(ValueError):
        tensor.tmap(t, lambda x: x)


def test_concat_channel_counts(rng):
    parts = [rng.random((10, 10, c)).astype(np.float32) for c in (25, 35, 35)]
    out = tensor.concat_channels(parts)
    assert out.shape == (10, 10, 95)


def test_concat_single_identity(rng):
    t = rng.random((4, 5, 3)).astype(np.float32)
    np.testing.assert_array_equal(tensor.concat_channels([t]), t)


def test_concat_roundtrip(rng):
    a = rng.random((4, 4, 2)).astype(np.float32)
    b = rng.random((4, 4, 3)).astype(np.float32)
    out = tensor.concat_channels([a, b])
    np.testing.assert_array_equal(out[:, :, :2], a)
    np.testing.assert_array_equal(out[:, :, 2:], b)


def test_concat_spatial_mismatch(rng):
    with pytest.raises(ValueError):
        tensor.concat_channels([rng.random((4, 4, 1)), rng.random((4, 5, 1))])


def test_concat_empty_list():
    with pytest.raises(ValueError):
        tensor.concat_channels([])


small_dims = st.integers(min_value=1, max_value=6)


@settings(max_examples=200, deadline=None)
@given(h=small_dims, w=small_dims, c=small_dims, data=st.data())
def test_set_get_identity_property(h, w, c, data):
    t = tensor.new(Shape(h, w, c), 0.25)
    y = data.draw(st.integers(0, h - 1))
    x = data.draw(st.integers(0, w - 1))
    ch = data.draw(st.integers(0, c - 1))
    v = data.draw(st.floats(-1e6, 1e6))
    assert tensor.get(tensor.set_value(t, y, x, ch, v), y, x, ch) == np.float32(v)


@settings(max_examples=200, deadline=None)
@given(h=small_dims, w=small_dims,
       cs=st.lists(small_dims, min_size=3, max_size=3), seed=st.integers(0, 2**32 - 1))
def test_concat_associativity(h, w, cs, seed):
    r = np.random.default_rng(seed)
    a, b, c = (r.random((h, w, ci)).astype(np.float32) for ci in cs)
    left = tensor.concat_channels([tensor.concat_channels([a, b]), c])
    np.testing.assert_array_equal(tensor.concat_channels([a, b, c]), left)


@settings(max_examples=200, deadline=None)
@given(h=small_dims, w=small_dims, c=small_dims, seed=st.integers(0, 2**32 - 1))
def test_zip_left_identity(h, w, c, seed):
    r = np.random.default_rng(seed)
    a = r.random((h, w, c)).astype(np.float32)
    b = r.random((h, w, c)).astype(np.float32)
    np.testing.assert_array_equal(tensor.tzip(a, b, lambda x, y: x), a)
