"""Input-conditioned convolution with M expert kernels.

Each sample gets its own kernel ``sum_k alpha_k * W_k``, with ``alpha`` produced
by a small MLP on the globally pooled input.  The module also carries the
closed-form parameter/FLOP comparison against a plain convolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .tensor_core import (
    DTYPE, ConvSpec, ShapeError, as_tensor, batchnorm_infer, conv2d,
    global_avg_pool, relu, sigmoid,
)


@dataclass(frozen=True)
class BatchNormParams:
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @classmethod
    def identity(cls, channels: int) -> "BatchNormParams":
        """Statistics that make batchnorm_infer the identity map (eps=0)."""
        z, o = np.zeros(channels, DTYPE), np.ones(channels, DTYPE)
        return cls(z, o, o.copy(), z.copy(), eps=0.0)

    def __call__(self, x):
        return batchnorm_infer(x, self.mean, self.var, self.gamma, self.beta, self.eps)


@dataclass(frozen=True)
class DynamicConvParams:
    """Expert kernel stack plus the coefficient MLP (C_in -> C_in -> M).

    MLP biases and the output bias are optional; the network leaves them out so
    the stored scalar count is exactly ``C_in^2 + C_in*M + M*C_out*C_in*K^2``.
    """
    kernels: np.ndarray          # (M, C_out, C_in, K, K)
    mlp_w1: np.ndarray           # (C_in, C_in)
    mlp_w2: np.ndarray           # (M, C_in)
    mlp_b1: Optional[np.ndarray] = None
    mlp_b2: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: Optional[int] = None   # None -> "same" padding K // 2

    def __post_init__(self):
        k = np.asarray(self.kernels)
        if k.ndim != 5 or k.shape[0] < 1:
            raise ShapeError(f"kernels must be (M>=1, C_out, C_in, K, K), got {k.shape}")
        m, _, c_in = k.shape[:3]
        if np.shape(self.mlp_w1) != (c_in, c_in):
            raise ShapeError(f"mlp_w1 must be ({c_in}, {c_in}), got {np.shape(self.mlp_w1)}")
        if np.shape(self.mlp_w2) != (m, c_in):
            raise ShapeError(f"mlp_w2 must be ({m}, {c_in}), got {np.shape(self.mlp_w2)}")

    @property
    def num_experts(self) -> int:
        return self.kernels.shape[0]

    @property
    def spec(self) -> ConvSpec:
        _, c_out, c_in, k, _ = self.kernels.shape
        pad = k // 2 if self.padding is None else self.padding
        return ConvSpec(c_in, c_out, k, self.stride, pad)

    def stored_values(self) -> int:
        arrays = (self.kernels, self.mlp_w1, self.mlp_w2, self.mlp_b1, self.mlp_b2, self.bias)
        return sum(int(np.size(a)) for a in arrays if a is not None)


def attention_coeffs(x, params: DynamicConvParams) -> np.ndarray:
    """Per-sample expert coefficients, shape (N, M), each in (0, 1)."""
    x = as_tensor(x)
    c_in = params.mlp_w1.shape[0]
    if x.shape[1] != c_in:
        raise ShapeError(f"input has {x.shape[1]} channels, dynamic conv expects {c_in}")
    pooled = global_avg_pool(x)[:, :, 0, 0]
    hidden = pooled @ np.asarray(params.mlp_w1, DTYPE).T
    if params.mlp_b1 is not None:
        hidden = hidden + params.mlp_b1
    logits = relu(hidden) @ np.asarray(params.mlp_w2, DTYPE).T
    if params.mlp_b2 is not None:
        logits = logits + params.mlp_b2
    return sigmoid(logits)


def dynamic_conv2d(x, params: DynamicConvParams, alpha=None) -> np.ndarray:
    """Aggregate the expert kernels per sample, then convolve once.

    ``alpha`` overrides the MLP output (shape (N, M)); used by tests to pin
    one-hot or hand-chosen coefficients.
    """
    x = as_tensor(x)
    if alpha is None:
        alpha = attention_coeffs(x, params)
    alpha = np.asarray(alpha, dtype=DTYPE)
    if alpha.shape != (x.shape[0], params.num_experts):
        raise ShapeError(f"alpha must be (N={x.shape[0]}, M={params.num_experts}), got {alpha.shape}")
    spec = params.spec
    kernels = np.asarray(params.kernels, DTYPE)
    outs = []
    for i in range(x.shape[0]):
        w = np.tensordot(alpha[i], kernels, axes=1)
        outs.append(conv2d(x[i:i + 1], w, params.bias, spec))
    return np.concatenate(outs, axis=0)


def ddc_layer(x, first: DynamicConvParams, second: DynamicConvParams,
              norm1: Optional[BatchNormParams] = None,
              norm2: Optional[BatchNormParams] = None) -> np.ndarray:
    """Two stacked dynamic convs, each followed by batchnorm and ReLU.

    The second layer's coefficients come from the first layer's output.
    Missing norms are treated as identity.
    """
    if second.spec.in_channels != first.spec.out_channels:
        raise ShapeError(
            f"second dynamic conv expects {second.spec.in_channels} channels, "
            f"first produces {first.spec.out_channels}"
        )
    y = dynamic_conv2d(x, first)
    if norm1 is not None:
        y = norm1(y)
    y = relu(y)
    y = dynamic_conv2d(y, second)
    if norm2 is not None:
        y = norm2(y)
    return relu(y)


@dataclass(frozen=True)
class ConvComplexity:
    """Exact counts for one conv layer, standard vs. dynamic with M experts."""
    c_in: int
    c_out: int
    kernel_size: int
    num_experts: int
    out_h: int
    out_w: int
    standard_params: int
    standard_flops: int
    dynamic_params: int
    dynamic_flops: int

    @property
    def r_param(self) -> Fraction:
        return Fraction(self.dynamic_params, self.standard_params)

    @property
    def r_flops(self) -> Fraction:
        return Fraction(self.dynamic_flops, self.standard_flops)

    @property
    def r_param_approx(self) -> Fraction:
        return Fraction(1, self.kernel_size ** 2) + self.num_experts

    @property
    def r_flops_approx(self) -> Fraction:
        return Fraction(1)


def complexity_report(spec: ConvSpec, num_experts: int, out_h: int, out_w: int) -> ConvComplexity:
    """Closed-form parameter and FLOP counts (multiply-accumulates) for one layer."""
    if min(num_experts, out_h, out_w) < 1:
        raise ValueError("num_experts and output dims must be positive")
    c_in, c_out, k, m = spec.in_channels, spec.out_channels, spec.kernel_size, num_experts
    kernel = c_out * c_in * k * k
    conv_flops = out_h * out_w * kernel
    head = c_in * c_in + c_in * m + m * kernel
    return ConvComplexity(
        c_in=c_in, c_out=c_out, kernel_size=k, num_experts=m, out_h=out_h, out_w=out_w,
        standard_params=kernel,
        standard_flops=conv_flops,
        dynamic_params=head,
        dynamic_flops=head + conv_flops,
    )
