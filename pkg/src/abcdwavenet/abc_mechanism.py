"""Multi-scale aggregation (MIA) and the attention gate used on skip connections.

MIA fuses all five encoder outputs at the fourth stage's resolution:
unify -> adaptive scale selection -> progressive separable refinement ->
contrast-aware channel attention.  The gate (AACG) cross-attends the MIA
features against one encoder stage and uses the result to gate it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .tensor_core import (
    DTYPE, ConvSpec, ShapeError, adaptive_avg_pool, as_tensor, bilinear_resize,
    concat_channels, conv2d, depthwise_separable_conv, layernorm, leaky_relu,
    relu, sigmoid, softmax,
)

ASS_KERNELS = (3, 5, 7)


@dataclass(frozen=True)
class CCAParams:
    w2: np.ndarray   # (hidden, C)
    b2: np.ndarray   # (hidden,)
    w3: np.ndarray   # (C, hidden)
    b3: np.ndarray   # (C,)


def cca_hidden(channels: int, ratio: int) -> int:
    return max(1, channels // ratio)


def channel_contrast(x) -> np.ndarray:
    """Spatial mean plus spatial standard deviation, shape (N, C)."""
    x = as_tensor(x).astype(np.float64)
    return (x.mean(axis=(2, 3)) + x.std(axis=(2, 3))).astype(DTYPE)


def cca_gate(x, params: CCAParams) -> np.ndarray:
    hidden = relu(channel_contrast(x) @ params.w2.T + params.b2)
    return sigmoid(hidden @ params.w3.T + params.b3)


def cca_forward(x, params: CCAParams) -> np.ndarray:
    x = as_tensor(x)
    if params.w3.shape[0] != x.shape[1]:
        raise ShapeError(f"CCA params are for {params.w3.shape[0]} channels, input has {x.shape[1]}")
    return x * cca_gate(x, params)[:, :, None, None]


@dataclass(frozen=True)
class Conv:
    """'Same'-padded stride-1 convolution; ``groups`` as in :func:`conv2d`."""
    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    groups: int = 1

    def __call__(self, x):
        c_in = self.weight.shape[1] * self.groups
        spec = ConvSpec.same(c_in, self.weight.shape[0], self.weight.shape[-1], self.groups)
        return conv2d(x, self.weight, self.bias, spec)


@dataclass(frozen=True)
class SeparableConv:
    dw_weight: np.ndarray
    dw_bias: np.ndarray
    pw_weight: np.ndarray
    pw_bias: np.ndarray

    def __call__(self, x):
        return depthwise_separable_conv(x, self.dw_weight, self.pw_weight, self.dw_bias, self.pw_bias)


@dataclass(frozen=True)
class MiaParams:
    """Weights of the aggregation module.

    ``ass_branches`` holds the depthwise 3x3/5x5/7x7 convs, ``ass_chain`` the
    three convs applied in sequence, ``ass_logits`` the four mixing logits.
    ``ass_*`` or ``psr_steps`` set to None skip that stage.
    """
    unify: Conv
    ass_branches: Optional[Sequence[Conv]]
    ass_chain: Optional[Sequence[Conv]]
    ass_logits: Optional[np.ndarray]
    psr_steps: Optional[Sequence[SeparableConv]]
    cca: CCAParams
    leaky_slope: float = 0.01


def _check_stages(stages):
    if len(stages) != 5:
        raise ShapeError(f"MIA expects exactly 5 encoder stages, got {len(stages)}")
    return [as_tensor(s, f"stage{i + 1}") for i, s in enumerate(stages)]


def resize_to(x, h: int, w: int) -> np.ndarray:
    """Average-pool when shrinking, bilinear when growing (per axis pair)."""
    xh, xw = x.shape[2:]
    if (xh, xw) == (h, w):
        return x
    if xh >= h and xw >= w:
        return adaptive_avg_pool(x, h, w)
    return bilinear_resize(x, h, w)


def mia_unify(stages: Sequence, params: MiaParams) -> np.ndarray:
    stages = _check_stages(stages)
    h, w = stages[3].shape[2:]
    merged = concat_channels([resize_to(s, h, w) for s in stages])
    return params.unify(merged)


def ass_branch_outputs(x, params: MiaParams) -> List[np.ndarray]:
    outs = [conv(x) for conv in params.ass_branches]
    y = x
    for conv in params.ass_chain:
        y = conv(y)
    outs.append(y)
    return outs


def ass_forward(x, params: MiaParams) -> np.ndarray:
    x = as_tensor(x)
    weights = softmax(np.asarray(params.ass_logits, DTYPE), axis=0)
    outs = ass_branch_outputs(x, params)
    return sum(wk * fk for wk, fk in zip(weights, outs)).astype(DTYPE)


def psr_forward(x, params: MiaParams) -> np.ndarray:
    x = as_tensor(x)
    steps = params.psr_steps
    n_steps = len(steps)
    c = x.shape[1]
    if c % (2 ** (n_steps - 1)):
        raise ShapeError(f"PSR with {n_steps} steps needs channels divisible by {2 ** (n_steps - 1)}, got {c}")
    distilled = []
    rem = x
    for i, step in enumerate(steps):
        y = leaky_relu(step(rem), params.leaky_slope)
        if i == n_steps - 1:
            distilled.append(y)
        else:
            half = y.shape[1] // 2
            distilled.append(y[:, :half])
            rem = y[:, half:]
    return concat_channels(distilled)


def mia_forward(stages: Sequence, params: MiaParams) -> np.ndarray:
    y = mia_unify(stages, params)
    if params.ass_branches is not None:
        y = ass_forward(y, params)
    if params.psr_steps is not None:
        y = psr_forward(y, params)
    return cca_forward(y, params.cca)


@dataclass(frozen=True)
class AacgParams:
    wq: np.ndarray   # (C, C) each, applied as tokens @ w.T + b
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    heads: int = 4

    @property
    def embed(self) -> int:
        return self.wq.shape[0]


def _tokens(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h * w).transpose(0, 2, 1)


def _split_heads(t, heads):
    n, length, c = t.shape
    return t.reshape(n, length, heads, c // heads).transpose(0, 2, 1, 3)


def cross_attention(f_q, f_kv, params: AacgParams, return_weights: bool = False):
    """Multi-head attention with queries from ``f_q`` and keys/values from ``f_kv``.

    Spatial positions are tokens, channels are the embedding.  Returns the
    fused tensor in (N, C, H, W) layout, plus the (N, heads, L, L) attention
    weights when ``return_weights`` is set.
    """
    f_q, f_kv = as_tensor(f_q, "query"), as_tensor(f_kv, "key/value")
    if f_q.shape != f_kv.shape:
        raise ShapeError(f"cross_attention inputs must share shape, got {f_q.shape} vs {f_kv.shape}")
    n, c, h, w = f_q.shape
    heads = params.heads
    if c % heads:
        raise ShapeError(f"embed dim {c} not divisible by {heads} heads")
    if params.embed != c:
        raise ShapeError(f"attention params are for embed {params.embed}, input has {c} channels")
    d_k = c // heads
    tq, tkv = _tokens(f_q), _tokens(f_kv)
    q = _split_heads(tq @ params.wq.T + params.bq, heads)
    k = _split_heads(tkv @ params.wk.T + params.bk, heads)
    v = _split_heads(tkv @ params.wv.T + params.bv, heads)
    attn = softmax(q @ k.transpose(0, 1, 3, 2) / DTYPE(np.sqrt(d_k)), axis=-1)
    merged = (attn @ v).transpose(0, 2, 1, 3).reshape(n, h * w, c)
    out = (merged @ params.wo.T + params.bo).astype(DTYPE)
    out = out.transpose(0, 2, 1).reshape(n, c, h, w)
    if return_weights:
        return out, attn
    return out


def aacg_gate(f_mia, f_enc, params: AacgParams, max_attn_hw: Optional[int] = None) -> np.ndarray:
    """Gate values in (0, 1) with the shape of ``f_enc``.

    When the map is larger than ``max_attn_hw`` per side, attention runs on
    average-pooled inputs and the gate is bilinearly upsampled.
    """
    h, w = f_enc.shape[2:]
    ah, aw = h, w
    if max_attn_hw is not None:
        ah, aw = min(h, max_attn_hw), min(w, max_attn_hw)
    q, kv = f_mia, f_enc
    if (ah, aw) != (h, w):
        q, kv = adaptive_avg_pool(q, ah, aw), adaptive_avg_pool(kv, ah, aw)
    fused = cross_attention(q, kv, params)
    lam = sigmoid(layernorm(fused, params.ln_gamma, params.ln_beta))
    if (ah, aw) != (h, w):
        lam = bilinear_resize(lam, h, w)
    return lam


def aacg_forward(f_mia, f_enc, params: AacgParams, max_attn_hw: Optional[int] = None) -> np.ndarray:
    f_mia, f_enc = as_tensor(f_mia, "F_mia"), as_tensor(f_enc, "F_enc")
    if f_mia.shape != f_enc.shape:
        raise ShapeError(f"AACG inputs must share shape, got {f_mia.shape} vs {f_enc.shape}")
    return aacg_gate(f_mia, f_enc, params, max_attn_hw) * f_enc + f_mia
