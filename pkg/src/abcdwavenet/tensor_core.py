"""Dense NCHW tensor primitives used by every layer of the network.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 and rank 4
(batch, channel, height, width).  Every function here is pure: inputs are
never modified and a fresh array is returned.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when tensor dimensions do not line up."""


def as_tensor(x, name: str = "input") -> np.ndarray:
    """Validate ``x`` as a rank-4 float32 tensor (copying only if needed)."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeError(f"{name}: expected rank-4 (N, C, H, W) tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name}: all dimensions must be >= 1, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel_size", "stride", "groups"):
            if getattr(self, field) < 1:
                raise ValueError(f"ConvSpec.{field} must be >= 1")
        if self.padding < 0:
            raise ValueError("ConvSpec.padding must be >= 0")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"in_channels ({self.in_channels}) and out_channels ({self.out_channels}) "
                f"must be divisible by groups ({self.groups})"
            )

    @classmethod
    def same(cls, in_channels: int, out_channels: int, kernel_size: int, groups: int = 1) -> "ConvSpec":
        """Stride-1 spec whose output keeps the input's spatial size (odd K)."""
        return cls(in_channels, out_channels, kernel_size, 1, kernel_size // 2, groups)

    @property
    def weight_shape(self) -> tuple:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_size, self.kernel_size)

    def output_size(self, h: int, w: int) -> tuple:
        k, s, p = self.kernel_size, self.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


def conv2d(x, weight, bias=None, spec: Optional[ConvSpec] = None, *,
           stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``weight`` has shape (C_out, C_in / groups, K, K).  Pass either a
    :class:`ConvSpec` or the stride/padding/groups keywords.
    """
    x = as_tensor(x)
    weight = np.asarray(weight, dtype=DTYPE)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"weight must have shape (C_out, C_in/groups, K, K), got {weight.shape}")
    if spec is None:
        spec = ConvSpec(x.shape[1], weight.shape[0], weight.shape[2], stride, padding, groups)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, conv expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {weight.shape} does not match spec {spec.weight_shape}")

    n, c, h, w = x.shape
    k, s, p, g = spec.kernel_size, spec.stride, spec.padding, spec.groups
    oh, ow = spec.output_size(h, w)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv output would be empty: {h}x{w} input, K={k}, pad={p}, stride={s}")

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    out_c = spec.out_channels
    cg, og = c // g, out_c // g

    if g == c and og == 1:
        # depthwise: one K*K stencil per channel, no matmul needed
        out = np.zeros((n, c, oh, ow), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s]
                out += patch * weight[:, 0, i, j][None, :, None, None]
    else:
        # shift-and-accumulate: K*K matmuls of (og, cg) @ (cg, oh*ow) per group
        xg = xp.reshape(n, g, cg, xp.shape[2], xp.shape[3])
        # (K, K, g, og, cg), contiguous so every matmul operand stays on the BLAS path
        wg = np.ascontiguousarray(weight.reshape(g, og, cg, k, k).transpose(3, 4, 0, 1, 2))
        out = np.zeros((n, g, og, oh * ow), dtype=DTYPE)
        for b in range(n):
            for gi in range(g):
                acc = out[b, gi]
                for i in range(k):
                    for j in range(k):
                        patch = xg[b, gi, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s]
                        patch = np.ascontiguousarray(patch).reshape(cg, oh * ow)
                        acc += wg[i, j, gi] @ patch
        out = out.reshape(n, out_c, oh, ow)

    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE)
        if bias.shape != (out_c,):
            raise ShapeError(f"bias must have shape ({out_c},), got {bias.shape}")
        out += bias[None, :, None, None]
    return out


def depthwise_separable_conv(x, dw_weight, pw_weight, dw_bias=None, pw_bias=None,
                             kernel_size: Optional[int] = None) -> np.ndarray:
    """Depthwise KxK conv ("same" padding) followed by a 1x1 pointwise conv."""
    x = as_tensor(x)
    c = x.shape[1]
    dw_weight = np.asarray(dw_weight, dtype=DTYPE)
    k = kernel_size or dw_weight.shape[-1]
    if dw_weight.shape != (c, 1, k, k):
        raise ShapeError(f"depthwise weight must be ({c}, 1, {k}, {k}), got {dw_weight.shape}")
    y = conv2d(x, dw_weight, dw_bias, ConvSpec.same(c, c, k, groups=c))
    pw_weight = np.asarray(pw_weight, dtype=DTYPE)
    return conv2d(y, pw_weight, pw_bias, ConvSpec(c, pw_weight.shape[0], 1))


def global_avg_pool(x) -> np.ndarray:
    x = as_tensor(x)
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(DTYPE)


def _pool_bounds(size: int, out: int):
    # window i covers [floor(i*size/out), ceil((i+1)*size/out))
    return [((i * size) // out, -(-((i + 1) * size) // out)) for i in range(out)]


def adaptive_avg_pool(x, out_h: int, out_w: int) -> np.ndarray:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError("adaptive_avg_pool output dims must be >= 1")
    if out_h > h or out_w > w:
        raise ShapeError(
            f"adaptive_avg_pool only shrinks ({h}x{w} -> {out_h}x{out_w}); use bilinear_resize to upsample"
        )
    if (out_h, out_w) == (h, w):
        return x.copy()
    if h % out_h == 0 and w % out_w == 0:
        fh, fw = h // out_h, w // out_w
        return x.reshape(n, c, out_h, fh, out_w, fw).mean(axis=(3, 5), dtype=np.float64).astype(DTYPE)
    out = np.empty((n, c, out_h, out_w), dtype=DTYPE)
    rows, cols = _pool_bounds(h, out_h), _pool_bounds(w, out_w)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3), dtype=np.float64)
    return out


def _linear_weights(in_size: int, out_size: int):
    # half-pixel centres (align_corners=False), negative source coords clamp to 0
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = (src - i0).astype(DTYPE)
    return i0, i1, frac


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError("bilinear_resize output dims must be >= 1")
    n, c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        return x.copy()
    i0, i1, fy = _linear_weights(h, out_h)
    y = x[:, :, i0, :] * (1 - fy)[None, None, :, None] + x[:, :, i1, :] * fy[None, None, :, None]
    j0, j1, fx = _linear_weights(w, out_w)
    return (y[..., j0] * (1 - fx) + y[..., j1] * fx).astype(DTYPE)


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=DTYPE), 0)


def leaky_relu(x, slope: float = 0.01) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    return np.where(x >= 0, x, x * DTYPE(slope))


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(DTYPE)


def _same_shape(a, b, op):
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "add")
    return a + b


def mul(a, b) -> np.ndarray:
    a, b = _same_shape(a, b, "mul")
    return a * b


def concat_channels(tensors: Sequence) -> np.ndarray:
    tensors = [as_tensor(t, f"tensor[{i}]") for i, t in enumerate(tensors)]
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: N/H/W mismatch {ref} vs {t.shape}")
    return np.concatenate(tensors, axis=1)


def batchnorm_infer(x, mean, var, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    x = as_tensor(x)
    c = x.shape[1]
    stats = [np.asarray(v, dtype=DTYPE) for v in (mean, var, gamma, beta)]
    for name, v in zip(("mean", "var", "gamma", "beta"), stats):
        if v.shape != (c,):
            raise ShapeError(f"batchnorm {name} must have shape ({c},), got {v.shape}")
    mean, var, gamma, beta = stats
    if np.any(var < 0):
        raise ValueError("batchnorm variance must be non-negative")
    scale = gamma / np.sqrt(var + DTYPE(eps))
    shift = beta - mean * scale
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def layernorm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Normalise over the channel axis independently at every (n, h, w)."""
    x = as_tensor(x)
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    y = (x - mu) / np.sqrt(var + DTYPE(eps))
    gamma = np.asarray(gamma, dtype=DTYPE)[None, :, None, None]
    beta = np.asarray(beta, dtype=DTYPE)[None, :, None, None]
    return (y * gamma + beta).astype(DTYPE)


def maxpool2d(x, k: int = 2, stride: int = 2) -> np.ndarray:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % stride or w % stride:
        raise ShapeError(f"maxpool2d: {h}x{w} not divisible by stride {stride}")
    if k == stride:
        return x.reshape(n, c, h // k, k, w // k, k).max(axis=(3, 5))
    oh, ow = (h - k) // stride + 1, (w - k) // stride + 1
    out = np.full((n, c, oh, ow), -np.inf, dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            out = np.maximum(out, x[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride])
    return out


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)
