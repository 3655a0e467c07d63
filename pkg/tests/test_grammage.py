import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cloudindex.errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidField,
    NonPositivePixel,
    UnsupportedImage,
    ZeroVariance,
)
from cloudindex.grammage import GrammageField, GrayImage, normalize_grammage, pixelwise_mean


def _white(n, seed, pixel=1.0):
    rng = np.random.default_rng(seed)
    return GrammageField.from_raw(rng.standard_normal((n, n)), pixel)


def test_two_pixel_hand_example():
    # ln g = {1, 3} per row (images need two rows): mu = 2, sigma = 1
    img = GrayImage(np.array([[math.e, math.e**3], [math.e, math.e**3]]), 1.0)
    f = normalize_grammage(img)
    np.testing.assert_allclose(f.values, [[1.0, -1.0], [1.0, -1.0]], atol=1e-15)


def test_constant_image_rejected():
    with pytest.raises(ZeroVariance):
        normalize_grammage(GrayImage(np.full((4, 4), 128), 1.0))


def test_zero_pixel_rejected():
    g = np.full((4, 4), 100)
    g[1, 2] = 0
    with pytest.raises(NonPositivePixel):
        normalize_grammage(GrayImage(g, 1.0))


def test_brighter_means_less_material():
    g = np.array([[10, 20], [30, 40]])
    f = normalize_grammage(GrayImage(g, 1.0)).values
    assert np.all(np.diff(f.ravel()) < 0)


def test_saturation_is_counted_and_logged(caplog):
    g = np.array([[255, 10], [20, 30]], dtype=np.uint8)
    img = GrayImage(g, 1.0, max_value=255, source="x.pgm")
    assert img.saturated == 1
    normalize_grammage(img)
    assert "saturated" in caplog.text


def test_gray_image_validation():
    with pytest.raises(UnsupportedImage):
        GrayImage(np.ones(5), 1.0)
    with pytest.raises(UnsupportedImage):
        GrayImage(np.ones((1, 5)), 1.0)
    with pytest.raises(UnsupportedImage):
        GrayImage(np.ones((3, 3)), 0.0)
    with pytest.raises(UnsupportedImage):
        GrayImage(np.array([[1.0, np.nan], [1, 1]]), 1.0)
    with pytest.raises(UnsupportedImage):
        GrayImage(np.ones((3, 3, 3)), 1.0)


def test_field_check_rejects_unnormalized():
    with pytest.raises(InvalidField):
        GrammageField(np.arange(4.0).reshape(2, 2), 1.0).check()


@settings(max_examples=60, deadline=None)
@given(
    g=hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=2, max_side=40),
                 elements=st.floats(1.0, 65535.0)),
)
def test_normalized_invariants(g):
    if np.ptp(np.log(g)) < 1e-6:
        return
    f = normalize_grammage(GrayImage(g, 1.0)).values
    assert abs(f.mean()) < 1e-9
    assert abs(f.std() - 1) < 1e-9


@settings(max_examples=60, deadline=None)
@given(
    g=hnp.arrays(np.float64, (16, 12), elements=st.floats(1.0, 4000.0)),
    c=st.floats(1e-3, 1e3),
)
def test_gray_scale_invariance(g, c):
    if np.ptp(np.log(g)) < 1e-3:
        return
    a = normalize_grammage(GrayImage(g, 1.0)).values
    b = normalize_grammage(GrayImage(c * g, 1.0)).values
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a))) * 10


def test_pixelwise_mean_single_is_identity():
    f = _white(16, 0)
    assert pixelwise_mean([f]) is f


def test_pixelwise_mean_errors():
    with pytest.raises(EmptyInput):
        pixelwise_mean([])
    a = _white(16, 0)
    b = GrammageField.from_raw(np.random.default_rng(1).standard_normal((16, 17)), 1.0)
    with pytest.raises(DimensionMismatch):
        pixelwise_mean([a, b])
    c = _white(16, 2, pixel=2.0)
    with pytest.raises(DimensionMismatch):
        pixelwise_mean([a, c])


def test_pixelwise_mean_variance_of_mean():
    fields = [_white(256, s) for s in range(10)]
    raw = np.mean([f.values for f in fields], axis=0)
    assert raw.var() == pytest.approx(0.1, rel=0.2)
    out = pixelwise_mean(fields)
    assert abs(out.values.mean()) < 1e-9 and abs(out.values.std() - 1) < 1e-9


@settings(max_examples=25, deadline=None)
@given(perm=st.permutations(range(5)))
def test_pixelwise_mean_permutation_invariant(perm):
    fields = [_white(24, s) for s in range(5)]
    a = pixelwise_mean(fields).values
    b = pixelwise_mean([fields[i] for i in perm]).values
    assert np.array_equal(a, b)
