import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abcdwavenet.dynamic_conv import (
    BatchNormParams, DynamicConvParams, attention_coeffs, complexity_report, ddc_layer,
    dynamic_conv2d,
)
from abcdwavenet.tensor_core import ConvSpec, ShapeError
from oracles import naive_conv2d


def _params(r, m, c_in=3, c_out=4, k=3):
    return DynamicConvParams(
        r.standard_normal((m, c_out, c_in, k, k)).astype(np.float32),
        r.standard_normal((c_in, c_in)).astype(np.float32),
        r.standard_normal((m, c_in)).astype(np.float32),
    )


def test_attention_coeffs_hand_case():
    # pooled input ln2 -> hidden ln2 -> logits (ln2, -ln2) -> sigmoid (2/3, 1/3)
    p = DynamicConvParams(np.zeros((2, 1, 1, 3, 3), np.float32),
                          np.ones((1, 1), np.float32), np.array([[1.0], [-1.0]], np.float32))
    x = np.full((1, 1, 4, 4), math.log(2), np.float32)
    np.testing.assert_allclose(attention_coeffs(x, p)[0], [2 / 3, 1 / 3], atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
def test_aggregate_then_convolve_matches_loop_oracle(seed, m):
    r = np.random.default_rng(seed)
    p = _params(r, m)
    x = r.standard_normal((2, 3, 5, 5)).astype(np.float32)
    alpha = attention_coeffs(x, p)
    assert np.all((alpha > 0) & (alpha < 1))
    got = dynamic_conv2d(x, p)
    want = np.zeros(got.shape)
    for i in range(2):
        for e in range(m):
            want[i] += alpha[i, e] * naive_conv2d(x[i:i + 1], p.kernels[e], padding=1)[0]
    np.testing.assert_allclose(got, want, atol=1e-4)


def test_one_hot_alpha_is_plain_conv(rng):
    p = _params(rng, 3)
    x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
    for e in range(3):
        alpha = np.eye(3, dtype=np.float32)[e][None]
        want = naive_conv2d(x, p.kernels[e], padding=1)
        np.testing.assert_allclose(dynamic_conv2d(x, p, alpha), want, atol=1e-5)


def test_alpha_shape_and_mlp_shape_errors(rng):
    p = _params(rng, 2)
    x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
    with pytest.raises(ShapeError):
        dynamic_conv2d(x, p, np.ones((1, 2)))
    with pytest.raises(ShapeError):
        dynamic_conv2d(np.zeros((1, 2, 4, 4), np.float32), p)
    with pytest.raises(ShapeError):
        DynamicConvParams(p.kernels, np.zeros((2, 2)), p.mlp_w2)


def test_ddc_layer_shape_nonneg_and_second_alpha_from_first_output(rng):
    first = _params(rng, 2, 3, 4)
    second = _params(rng, 2, 4, 4)
    x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    y = ddc_layer(x, first, second, BatchNormParams.identity(4), BatchNormParams.identity(4))
    assert y.shape == (2, 4, 6, 6) and y.min() >= 0
    y1 = np.maximum(dynamic_conv2d(x, first), 0)
    want = np.maximum(dynamic_conv2d(y1, second, attention_coeffs(y1, second)), 0)
    np.testing.assert_allclose(y, want, atol=1e-5)
    with pytest.raises(ShapeError):
        ddc_layer(x, first, _params(rng, 2, 3, 4))


def test_complexity_hand_values():
    c = complexity_report(ConvSpec(3, 8, 3), 2, 4, 4)
    # 3*3 + 3*2 + 2*8*3*9
    assert c.standard_params == 216 and c.dynamic_params == 447
    assert c.r_param == Fraction(447, 216)
    assert c.r_param_approx == Fraction(19, 9)
    c2 = complexity_report(ConvSpec(3, 2, 3), 1, 4, 4)
    assert c2.standard_flops == 864


def test_r_flops_negligible_for_large_maps():
    c = complexity_report(ConvSpec(64, 64, 3, padding=1), 4, 256, 256)
    assert abs(float(c.r_flops) - 1) < 0.01
    assert c.r_flops > 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.sampled_from([1, 3, 5]), st.integers(1, 8))
def test_param_count_matches_stored_values(c_in, c_out, k, m):
    p = DynamicConvParams(np.zeros((m, c_out, c_in, k, k), np.float32),
                          np.zeros((c_in, c_in), np.float32), np.zeros((m, c_in), np.float32))
    assert complexity_report(p.spec, m, 1, 1).dynamic_params == p.stored_values()
    c = complexity_report(p.spec, m, 1, 1)
    exact = Fraction(c_in * c_in + c_in * m, c_out * c_in * k * k) + m
    assert c.r_param == exact
