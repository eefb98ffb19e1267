"""Haar wavelet transform and the frequency/spatial feature block built on it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .abc_mechanism import CCAParams, cca_forward
from .dynamic_conv import BatchNormParams
from .tensor_core import (
    DTYPE, ConvSpec, ShapeError, as_tensor, concat_channels, conv2d,
    depthwise_separable_conv, relu,
)


class SubBands(NamedTuple):
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray


def dwt2d(x) -> SubBands:
    """Single-level orthonormal Haar DWT.

    With low-pass l = [1, 1]/sqrt2 and high-pass h = [-1, 1]/sqrt2, and each
    2x2 block [[a, b], [c, d]]:

        LL = (a + b + c + d) / 2     rows low,  cols low
        LH = (-a + b - c + d) / 2    rows low,  cols high
        HL = (-a - b + c + d) / 2    rows high, cols low
        HH = (a - b - c + d) / 2     rows high, cols high
    """
    x = as_tensor(x)
    h, w = x.shape[2:]
    if h % 2:
        raise ShapeError(f"dwt2d needs even height, got H={h}")
    if w % 2:
        raise ShapeError(f"dwt2d needs even width, got W={w}")
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    half = DTYPE(0.5)
    return SubBands(
        ll=(a + b + c + d) * half,
        lh=(b - a + d - c) * half,
        hl=(c + d - a - b) * half,
        hh=(a - b - c + d) * half,
    )


def idwt2d(bands) -> np.ndarray:
    """Exact inverse of :func:`dwt2d`."""
    ll, lh, hl, hh = (as_tensor(b, name) for b, name in zip(bands, SubBands._fields))
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ShapeError(
            f"sub-band shapes differ: LL{ll.shape} LH{lh.shape} HL{hl.shape} HH{hh.shape}"
        )
    n, c, h, w = ll.shape
    half = DTYPE(0.5)
    out = np.empty((n, c, 2 * h, 2 * w), dtype=DTYPE)
    out[:, :, 0::2, 0::2] = (ll - lh - hl + hh) * half
    out[:, :, 0::2, 1::2] = (ll + lh - hl - hh) * half
    out[:, :, 1::2, 0::2] = (ll - lh + hl - hh) * half
    out[:, :, 1::2, 1::2] = (ll + lh + hl + hh) * half
    return out


def channel_shuffle(x, groups: int = 2) -> np.ndarray:
    x = as_tensor(x)
    n, c, h, w = x.shape
    if c % groups:
        raise ShapeError(f"channel_shuffle: {c} channels not divisible by {groups} groups")
    return x.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)


@dataclass(frozen=True)
class FMBlockParams:
    """Mixing block for the LL band.

    One channel half runs through a large-kernel depthwise conv, a pointwise
    conv and ReLU; the other half is untouched.  After concat the halves are
    shuffled, reweighted by contrast attention and added back to the input.
    """
    dw_weight: np.ndarray    # (C/2, 1, K, K)
    dw_bias: np.ndarray      # (C/2,)
    pw_weight: np.ndarray    # (C/2, C/2, 1, 1)
    pw_bias: np.ndarray      # (C/2,)
    cca: CCAParams
    shuffle_groups: int = 2


def fmblock(ll, params: FMBlockParams) -> np.ndarray:
    ll = as_tensor(ll)
    c = ll.shape[1]
    if c % 2:
        raise ShapeError(f"fmblock splits channels in half; got odd channel count {c}")
    half = c // 2
    if params.dw_weight.shape[0] != half:
        raise ShapeError(f"fmblock params are for {2 * params.dw_weight.shape[0]} channels, input has {c}")
    mixed = depthwise_separable_conv(ll[:, :half], params.dw_weight, params.pw_weight,
                                     params.dw_bias, params.pw_bias)
    y = concat_channels([relu(mixed), ll[:, half:]])
    y = channel_shuffle(y, params.shuffle_groups)
    return cca_forward(y, params.cca) + ll


@dataclass(frozen=True)
class SpatialParams:
    dw1_weight: np.ndarray   # (C, 1, 3, 3)
    dw1_bias: np.ndarray
    norm: BatchNormParams
    dw2_weight: np.ndarray
    dw2_bias: np.ndarray


@dataclass(frozen=True)
class FusionParams:
    """Depthwise-separable projection of the 2C concat back to C channels."""
    dw_weight: np.ndarray    # (2C, 1, 3, 3)
    dw_bias: np.ndarray
    pw_weight: np.ndarray    # (C, 2C, 1, 1)
    pw_bias: np.ndarray


@dataclass(frozen=True)
class BISParams:
    fmblock: FMBlockParams
    spatial: SpatialParams
    fusion: FusionParams


LLTransform = Callable[[np.ndarray], np.ndarray]


def frequency_pathway(x, params: FMBlockParams, ll_transform: Optional[LLTransform] = None) -> np.ndarray:
    """DWT -> enhance LL only -> IDWT -> residual.

    ``ll_transform`` replaces the FMBlock (e.g. ``lambda ll: ll`` for checks
    that rely on perfect reconstruction).
    """
    x = as_tensor(x)
    bands = dwt2d(x)
    if ll_transform is None:
        ll = fmblock(bands.ll, params)
    else:
        ll = ll_transform(bands.ll)
    return x + idwt2d(bands._replace(ll=ll))


def _depthwise(x, weight, bias):
    c = x.shape[1]
    return conv2d(x, weight, bias, ConvSpec.same(c, c, weight.shape[-1], groups=c))


def spatial_pathway(x, params: SpatialParams) -> np.ndarray:
    x = as_tensor(x)
    y = _depthwise(x, params.dw1_weight, params.dw1_bias)
    y = params.norm(relu(y))
    y = _depthwise(y, params.dw2_weight, params.dw2_bias)
    return y + x


def bis_forward(x, params: BISParams, ll_transform: Optional[LLTransform] = None) -> np.ndarray:
    x = as_tensor(x)
    freq = frequency_pathway(x, params.fmblock, ll_transform)
    spat = spatial_pathway(x, params.spatial)
    f = params.fusion
    return depthwise_separable_conv(concat_channels([freq, spat]), f.dw_weight, f.pw_weight,
                                    f.dw_bias, f.pw_bias)
