"""U-shaped segmentation network: five DDC-BIS encoders, MIA, gated skips, four decoders."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .abc_mechanism import (
    ASS_KERNELS, AacgParams, CCAParams, Conv, MiaParams, SeparableConv,
    aacg_forward, mia_forward,
)
from .config import ModelConfig
from .dynamic_conv import BatchNormParams, DynamicConvParams, ddc_layer
from .tensor_core import (
    DTYPE, ConvSpec, ShapeError, as_tensor, bilinear_resize, concat_channels,
    conv2d, maxpool2d, sigmoid,
)
from .wavelet_bis import BISParams, FMBlockParams, FusionParams, SpatialParams, bis_forward
from .weights import WeightStore, init_weights, load_weights, save_weights, validate_store

MIN_SIDE = 32


@dataclass(frozen=True)
class BlockParams:
    first: DynamicConvParams
    norm1: BatchNormParams
    second: DynamicConvParams
    norm2: BatchNormParams
    bis: Optional[BISParams]


@dataclass(frozen=True)
class SkipParams:
    proj: Conv
    aacg: Optional[AacgParams]


class _Params:
    """Turns flat store paths into the per-layer parameter records."""

    def __init__(self, store: WeightStore, cfg: ModelConfig):
        self.s, self.cfg = store, cfg

    def conv(self, p, groups=1):
        return Conv(self.s[f"{p}.weight"], self.s.get(f"{p}.bias"), groups)

    def bn(self, p):
        return BatchNormParams(*(self.s[f"{p}.{k}"] for k in ("mean", "var", "gamma", "beta")))

    def dyn(self, p):
        return DynamicConvParams(self.s[f"{p}.kernels"], self.s[f"{p}.mlp_w1"], self.s[f"{p}.mlp_w2"])

    def cca(self, p):
        return CCAParams(*(self.s[f"{p}.{k}"] for k in ("w2", "b2", "w3", "b3")))

    def sep(self, p):
        return SeparableConv(self.s[f"{p}.dw.weight"], self.s[f"{p}.dw.bias"],
                             self.s[f"{p}.pw.weight"], self.s[f"{p}.pw.bias"])

    def block(self, p) -> BlockParams:
        bis = None
        if not self.cfg.disable_bis:
            s, b = self.s, f"{p}.bis"
            bis = BISParams(
                fmblock=FMBlockParams(s[f"{b}.fmblock.dw.weight"], s[f"{b}.fmblock.dw.bias"],
                                      s[f"{b}.fmblock.pw.weight"], s[f"{b}.fmblock.pw.bias"],
                                      self.cca(f"{b}.fmblock.cca")),
                spatial=SpatialParams(s[f"{b}.spatial.dw1.weight"], s[f"{b}.spatial.dw1.bias"],
                                      self.bn(f"{b}.spatial.norm"),
                                      s[f"{b}.spatial.dw2.weight"], s[f"{b}.spatial.dw2.bias"]),
                fusion=FusionParams(s[f"{b}.fusion.dw.weight"], s[f"{b}.fusion.dw.bias"],
                                    s[f"{b}.fusion.pw.weight"], s[f"{b}.fusion.pw.bias"]),
            )
        return BlockParams(self.dyn(f"{p}.ddc.first"), self.bn(f"{p}.ddc.norm1"),
                           self.dyn(f"{p}.ddc.second"), self.bn(f"{p}.ddc.norm2"), bis)

    def mia(self) -> MiaParams:
        cfg = self.cfg
        branches = chain = logits = steps = None
        if not cfg.disable_ass:
            branches = [self.conv(f"mia.ass.k{k}", groups=cfg.stage_channels[3]) for k in ASS_KERNELS]
            chain = [self.conv(f"mia.ass.chain{k}", groups=cfg.stage_channels[3]) for k in ASS_KERNELS]
            logits = self.s["mia.ass.logits"]
        if not cfg.disable_psr:
            steps = [self.sep(f"mia.psr.step{j + 1}") for j in range(cfg.psr_steps)]
        return MiaParams(self.conv("mia.unify"), branches, chain, logits, steps, self.cca("mia.cca"))

    def skip(self, i) -> SkipParams:
        aacg = None
        if self.cfg.use_aacg:
            p, s = f"skip{i}.aacg", self.s
            aacg = AacgParams(s[f"{p}.wq"], s[f"{p}.bq"], s[f"{p}.wk"], s[f"{p}.bk"],
                              s[f"{p}.wv"], s[f"{p}.bv"], s[f"{p}.wo"], s[f"{p}.bo"],
                              s[f"{p}.ln.gamma"], s[f"{p}.ln.beta"], self.cfg.aacg_heads)
        return SkipParams(self.conv(f"skip{i}.proj"), aacg)


class Model:
    """Immutable network: config + validated weights + assembled layer params."""

    def __init__(self, config: ModelConfig, weights: WeightStore):
        validate_store(weights, config)
        self.config = config
        self.weights = weights
        for arr in weights.values():
            arr.setflags(write=False)
        p = _Params(weights, config)
        self.encoders = [p.block(f"enc{i + 1}") for i in range(5)]
        self.decoders = [p.block(f"dec{i + 1}") for i in range(4)]
        self.mia = p.mia() if config.use_mia else None
        self.skips = [p.skip(i + 1) for i in range(4)] if config.use_mia else None
        self.head = p.conv("head")

    def __call__(self, image, profile=None):
        return forward(self, image, profile)


def build_model(config: ModelConfig, seed: Optional[int] = None) -> Model:
    return Model(config, init_weights(config, seed))


def save_model(model: Model, path: Union[str, Path]):
    save_weights(model.weights, model.config, path)


def load_model(path: Union[str, Path], config: Optional[ModelConfig] = None) -> Model:
    cfg, store = load_weights(path, config)
    return Model(cfg, store)


@contextmanager
def _timed(profile: Optional[Dict[str, float]], name: str):
    if profile is None:
        yield
        return
    t0 = time.perf_counter()
    yield
    profile[name] = profile.get(name, 0.0) + time.perf_counter() - t0


def _run_block(x, blk: BlockParams, profile, name):
    with _timed(profile, f"{name}.ddc"):
        x = ddc_layer(x, blk.first, blk.second, blk.norm1, blk.norm2)
    if blk.bis is not None:
        with _timed(profile, f"{name}.bis"):
            x = bis_forward(x, blk.bis)
    return x


def check_image(image) -> np.ndarray:
    x = as_tensor(image, "image")
    h, w = x.shape[2:]
    if h < MIN_SIDE or w < MIN_SIDE or h % 32 or w % 32:
        raise ShapeError(f"image sides must be multiples of 32 and >= {MIN_SIDE}, got {h}x{w}")
    if not np.all(np.isfinite(x)) or x.min() < 0 or x.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    return x


def forward(model: Model, image, profile: Optional[Dict[str, float]] = None) -> np.ndarray:
    """Water probability map (N, 1, H, W) for an (N, C, H, W) image in [0, 1].

    ``profile``, if given, accumulates wall time per named section.
    """
    cfg = model.config
    x = check_image(image)
    if x.shape[1] != cfg.input_channels:
        raise ShapeError(f"model expects {cfg.input_channels} input channels, got {x.shape[1]}")

    feats: List[np.ndarray] = []
    h = x
    for i, blk in enumerate(model.encoders):
        if i:
            with _timed(profile, "pool"):
                h = maxpool2d(h)
        h = _run_block(h, blk, profile, f"enc{i + 1}")
        feats.append(h)

    if model.mia is None:
        skips = feats[:4]
    else:
        with _timed(profile, "mia"):
            g = mia_forward(feats, model.mia)
        skips = []
        for i, sp in enumerate(model.skips):
            enc = feats[i]
            with _timed(profile, f"skip{i + 1}"):
                # 1x1 projection commutes with bilinear resizing; project at the smaller size
                proj = bilinear_resize(sp.proj(g), *enc.shape[2:])
                if sp.aacg is None:
                    skips.append(proj + enc)
                else:
                    skips.append(aacg_forward(proj, enc, sp.aacg, cfg.aacg_max_attn_hw))

    d = feats[4]
    for i in range(3, -1, -1):
        with _timed(profile, "upsample"):
            up = bilinear_resize(d, *skips[i].shape[2:])
            d = concat_channels([skips[i], up])
        d = _run_block(d, model.decoders[i], profile, f"dec{i + 1}")

    with _timed(profile, "head"):
        logits = conv2d(d, model.head.weight, model.head.bias)
        return sigmoid(logits)


def predict_mask(probs, threshold: float = 0.5) -> np.ndarray:
    """1 where ``probs > threshold`` else 0 (float32, same shape)."""
    probs = np.asarray(probs, dtype=DTYPE)
    return (probs > threshold).astype(DTYPE)
