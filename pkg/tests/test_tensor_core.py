import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abcdwavenet.tensor_core import (
    ConvSpec, ShapeError, adaptive_avg_pool, as_tensor, batchnorm_infer, bilinear_resize,
    concat_channels, conv2d, depthwise_separable_conv, global_avg_pool, layernorm,
    leaky_relu, maxpool2d, relu, sigmoid, softmax,
)
from oracles import naive_conv2d


@pytest.mark.parametrize("groups,stride,padding,k", [
    (1, 1, 1, 3), (1, 2, 0, 3), (2, 1, 2, 5), (4, 1, 1, 3), (1, 1, 0, 1),
])
def test_conv2d_matches_loop_oracle(rng, groups, stride, padding, k):
    x = rng.standard_normal((2, 4, 7, 9)).astype(np.float32)
    w = rng.standard_normal((4, 4 // groups, k, k)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    got = conv2d(x, w, b, stride=stride, padding=padding, groups=groups)
    want = naive_conv2d(x, w, b, stride, padding, groups)
    assert got.dtype == np.float32
    np.testing.assert_allclose(got, want, atol=1e-5)


def test_conv2d_ones_kernel_sums_neighbourhood():
    x = np.ones((1, 1, 5, 5), np.float32)
    y = conv2d(x, np.ones((1, 1, 3, 3), np.float32), padding=1)
    assert y[0, 0, 2, 2] == 9.0
    assert y[0, 0, 0, 0] == 4.0
    assert y[0, 0, 0, 2] == 6.0


def test_conv2d_shape_errors():
    x = np.zeros((1, 3, 8, 8), np.float32)
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((2, 2, 3, 3), np.float32))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((3, 8, 8), np.float32), np.zeros((2, 3, 3, 3), np.float32))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((1, 3, 2, 2), np.float32), np.zeros((2, 3, 5, 5), np.float32))
    with pytest.raises(ValueError):
        ConvSpec(3, 2, 3, groups=2)


def test_convspec_same_and_output_size():
    spec = ConvSpec.same(8, 16, 5)
    assert spec.padding == 2
    assert spec.weight_shape == (16, 8, 5, 5)
    assert spec.output_size(10, 12) == (10, 12)
    assert ConvSpec(3, 3, 3, stride=2).output_size(9, 9) == (4, 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_conv2d_is_linear(seed, a, b):
    r = np.random.default_rng(seed)
    x1 = r.standard_normal((1, 3, 6, 6)).astype(np.float32)
    x2 = r.standard_normal((1, 3, 6, 6)).astype(np.float32)
    w = r.standard_normal((2, 3, 3, 3)).astype(np.float32)
    lhs = conv2d(a * x1 + b * x2, w, padding=1)
    rhs = a * conv2d(x1, w, padding=1) + b * conv2d(x2, w, padding=1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-3)


def test_depthwise_separable_equals_two_convs(rng):
    x = rng.standard_normal((2, 4, 6, 6)).astype(np.float32)
    dw = rng.standard_normal((4, 1, 3, 3)).astype(np.float32)
    pw = rng.standard_normal((5, 4, 1, 1)).astype(np.float32)
    db, pb = rng.standard_normal(4).astype(np.float32), rng.standard_normal(5).astype(np.float32)
    got = depthwise_separable_conv(x, dw, pw, db, pb)
    want = naive_conv2d(naive_conv2d(x, dw, db, 1, 1, 4), pw, pb)
    np.testing.assert_allclose(got, want, atol=1e-4)


def test_pools():
    ramp = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    np.testing.assert_allclose(adaptive_avg_pool(ramp, 2, 2)[0, 0], [[2.5, 4.5], [10.5, 12.5]])
    np.testing.assert_allclose(global_avg_pool(ramp)[0, 0, 0, 0], 7.5)
    assert global_avg_pool(np.array([1, 2, 3, 4], np.float32).reshape(1, 1, 2, 2))[0, 0, 0, 0] == 2.5
    np.testing.assert_array_equal(maxpool2d(ramp)[0, 0], [[5, 7], [13, 15]])
    with pytest.raises(ShapeError):
        maxpool2d(np.zeros((1, 1, 5, 4), np.float32))
    with pytest.raises(ShapeError):
        adaptive_avg_pool(ramp, 8, 8)


def test_adaptive_pool_uneven_windows():
    x = np.arange(5, dtype=np.float32).reshape(1, 1, 1, 5)
    # windows [0,3) and [2,5) from floor/ceil bounds
    np.testing.assert_allclose(adaptive_avg_pool(x, 1, 2)[0, 0, 0], [1.0, 3.0])


def test_bilinear_half_pixel_values():
    x = np.array([[0, 1], [0, 1]], np.float32).reshape(1, 1, 2, 2)
    y = bilinear_resize(x, 2, 4)
    np.testing.assert_allclose(y[0, 0, 0], [0, 0.25, 0.75, 1.0], atol=1e-7)
    np.testing.assert_allclose(y[0, 0, 1], y[0, 0, 0])
    same = bilinear_resize(x, 2, 2)
    np.testing.assert_array_equal(same, x)


def test_activations():
    x = np.array([-2, -0.5, 0, 0.5, 2], np.float32).reshape(1, 5, 1, 1)
    np.testing.assert_array_equal(relu(x).ravel(), [0, 0, 0, 0.5, 2])
    np.testing.assert_allclose(leaky_relu(x).ravel(), [-0.02, -0.005, 0, 0.5, 2], rtol=1e-6)
    s = sigmoid(np.array([-1000, 0, 1000, 1], np.float32))
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s, [0, 0.5, 1, 1 / (1 + math.exp(-1))], atol=1e-7)


def test_softmax_and_layernorm():
    np.testing.assert_allclose(softmax(np.array([0, math.log(3)], np.float32)), [0.25, 0.75], atol=1e-7)
    x = np.array([1, 2, 3], np.float32).reshape(1, 3, 1, 1)
    y = layernorm(x, np.ones(3, np.float32), np.zeros(3, np.float32), eps=0.0)
    np.testing.assert_allclose(y.ravel(), [-1.2247449, 0, 1.2247449], atol=1e-6)


def test_batchnorm():
    x = np.full((1, 2, 2, 2), 3.0, np.float32)
    y = batchnorm_infer(x, np.array([1, 3], np.float32), np.array([4, 1], np.float32),
                        np.array([2, 1], np.float32), np.array([0.5, -1], np.float32), eps=0.0)
    np.testing.assert_allclose(y[0, :, 0, 0], [2.5, -1.0])
    with pytest.raises(ValueError):
        batchnorm_infer(x, np.zeros(2), -np.ones(2), np.ones(2), np.zeros(2))


def test_concat_and_as_tensor():
    a, b = np.zeros((1, 2, 3, 3)), np.ones((1, 1, 3, 3))
    assert concat_channels([a, b]).shape == (1, 3, 3, 3)
    with pytest.raises(ShapeError):
        concat_channels([a, np.ones((1, 1, 4, 3))])
    assert as_tensor(np.zeros((1, 1, 2, 2), np.float64)).dtype == np.float32
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((1, 0, 2, 2)))
