import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rcot.core import (
    DimensionError, NumericalError, as_image, crop_patch, l2_norm, random_crops, sub,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
img = arrays(np.float64, (2, 3, 4), elements=finite)


def test_sub_self_is_zero(rng):
    a = rng.random((3, 5, 5))
    assert np.array_equal(sub(a, a), np.zeros_like(a))


def test_sub_scalar():
    assert sub([[[0.8]]], [[[0.3]]])[0, 0, 0] == pytest.approx(0.5, abs=1e-15)


def test_sub_matches_loop(rng):
    a, b = rng.random((1, 4, 4)), rng.random((1, 4, 4))
    out = sub(a, b)
    for c in range(1):
        for i in range(4):
            for j in range(4):
                assert out[c, i, j] == a[c, i, j] - b[c, i, j]


def test_sub_shape_mismatch():
    with pytest.raises(DimensionError):
        sub(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))


def test_as_image_rejects_bad_input():
    with pytest.raises(DimensionError):
        as_image(np.zeros((2, 2)))
    with pytest.raises(NumericalError):
        as_image(np.full((1, 2, 2), np.nan))


def test_l2_norm_cases(rng):
    assert l2_norm(np.zeros((1, 3, 3))) == 0.0
    assert l2_norm(np.array([[[3.0, 4.0]]])) == pytest.approx(5.0, abs=1e-15)
    a = rng.normal(size=(1, 8, 8))
    total = 0.0
    for v in a.ravel():
        total += v * v
    assert l2_norm(a) == pytest.approx(np.sqrt(total), rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(img, img, img)
def test_l2_norm_metric_properties(a, b, c):
    assert l2_norm(sub(a, b)) == pytest.approx(l2_norm(sub(b, a)), abs=1e-12)
    assert l2_norm(sub(a, c)) <= l2_norm(sub(a, b)) + l2_norm(sub(b, c)) + 1e-12


@settings(max_examples=40, deadline=None)
@given(img)
def test_sub_self_zero_property(a):
    assert not sub(a, a).any()


def test_crop_full_extent_is_identity(rng):
    a = rng.random((2, 6, 6))
    assert np.array_equal(crop_patch(a, 0, 0, 6), a)


def test_crop_ramp_top_left():
    ramp = np.arange(16, dtype=float).reshape(1, 4, 4)
    assert np.array_equal(crop_patch(ramp, 0, 0, 2), [[[0.0, 1.0], [4.0, 5.0]]])


def test_crop_index_mapping(rng):
    a = rng.random((3, 9, 7))
    for _ in range(20):
        size = int(rng.integers(1, 7))
        top = int(rng.integers(0, 9 - size + 1))
        left = int(rng.integers(0, 7 - size + 1))
        out = crop_patch(a, top, left, size)
        for c, i, j in np.ndindex(out.shape):
            assert out[c, i, j] == a[c, top + i, left + j]


def test_crop_never_reads_canary(rng):
    # negative canary ring around the valid region
    inner = rng.random((1, 5, 5))
    padded = np.pad(inner, ((0, 0), (1, 1), (1, 1)), constant_values=-1.0)
    for top in range(1, 4):
        for left in range(1, 4):
            out = crop_patch(padded, top, left, 3)
            assert (out >= 0).all()


def test_crop_out_of_bounds():
    a = np.zeros((1, 4, 4))
    for args in [(3, 0, 2), (0, 3, 2), (-1, 0, 2), (0, 0, 5), (0, 0, 0)]:
        with pytest.raises(DimensionError):
            crop_patch(a, *args)


def test_random_crops_shapes(rng):
    imgs = [rng.random((1, 10, 12)), rng.random((1, 8, 8))]
    crops = random_crops(imgs, 8, 5, rng)
    assert len(crops) == 5 and all(c.shape == (1, 8, 8) for c in crops)
