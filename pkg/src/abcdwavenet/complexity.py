"""Analytic parameter and FLOP accounting for a whole network config.

FLOPs are counted as multiply-accumulates of the conv-like and attention
matmuls (the same convention as ``H' W' C_out C_in K^2`` for a plain conv);
elementwise ops, norms and pooling contribute parameters but no FLOPs.
Parameter totals are exact and must agree with the stored weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

from .config import ModelConfig
from .dynamic_conv import complexity_report
from .tensor_core import ConvSpec

DEFAULT_SIDE = 256


@dataclass
class LayerCost:
    name: str
    kind: str
    params: int
    flops: int
    r_param: Optional[Fraction] = None
    r_flops: Optional[Fraction] = None


@dataclass
class ComplexityReport:
    input_hw: tuple
    layers: List[LayerCost] = field(default_factory=list)

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.layers)

    @property
    def total_flops(self) -> int:
        return sum(l.flops for l in self.layers)

    @property
    def gflops(self) -> float:
        return self.total_flops / 1e9

    @property
    def mparams(self) -> float:
        return self.total_params / 1e6

    def add(self, name, kind, params, flops, r_param=None, r_flops=None):
        self.layers.append(LayerCost(name, kind, int(params), int(flops), r_param, r_flops))


def conv_cost(c_in, c_out, k, h, w, groups=1, bias=True):
    params = c_out * (c_in // groups) * k * k + (c_out if bias else 0)
    return params, h * w * c_out * (c_in // groups) * k * k


def _dyn(rep, name, c_in, c_out, k, m, h, w):
    cc = complexity_report(ConvSpec(c_in, c_out, k, 1, k // 2), m, h, w)
    rep.add(name, "dynamic_conv", cc.dynamic_params, cc.dynamic_flops, cc.r_param, cc.r_flops)


def _conv(rep, name, c_in, c_out, k, h, w, groups=1, kind="conv"):
    rep.add(name, kind, *conv_cost(c_in, c_out, k, h, w, groups))


def _cca(rep, name, c, ratio):
    hidden = max(1, c // ratio)
    # two small matmuls on the pooled statistics
    rep.add(name, "cca", 2 * hidden * c + hidden + c, 2 * hidden * c)


def _block(rep, prefix, c_in, c_out, m, h, w, cfg):
    k = cfg.kernel_size
    _dyn(rep, f"{prefix}.ddc.first", c_in, c_out, k, m, h, w)
    rep.add(f"{prefix}.ddc.norm1", "batchnorm", 4 * c_out, 0)
    _dyn(rep, f"{prefix}.ddc.second", c_out, c_out, k, m, h, w)
    rep.add(f"{prefix}.ddc.norm2", "batchnorm", 4 * c_out, 0)
    if cfg.disable_bis:
        return
    half = c_out // 2
    lh, lw = h // 2, w // 2
    b = f"{prefix}.bis"
    _conv(rep, f"{b}.fmblock.dw", half, half, cfg.fmblock_kernel, lh, lw, groups=half, kind="depthwise")
    _conv(rep, f"{b}.fmblock.pw", half, half, 1, lh, lw)
    _cca(rep, f"{b}.fmblock.cca", c_out, cfg.cca_ratio)
    _conv(rep, f"{b}.spatial.dw1", c_out, c_out, 3, h, w, groups=c_out, kind="depthwise")
    rep.add(f"{b}.spatial.norm", "batchnorm", 4 * c_out, 0)
    _conv(rep, f"{b}.spatial.dw2", c_out, c_out, 3, h, w, groups=c_out, kind="depthwise")
    _conv(rep, f"{b}.fusion.dw", 2 * c_out, 2 * c_out, 3, h, w, groups=2 * c_out, kind="depthwise")
    _conv(rep, f"{b}.fusion.pw", 2 * c_out, c_out, 1, h, w)


def model_complexity(cfg: ModelConfig, height: int = DEFAULT_SIDE, width: Optional[int] = None) -> ComplexityReport:
    width = height if width is None else width
    rep = ComplexityReport((height, width))
    ch = cfg.stage_channels
    sizes = [(height >> i, width >> i) for i in range(5)]

    for i in range(5):
        c_in = cfg.input_channels if i == 0 else ch[i - 1]
        _block(rep, f"enc{i + 1}", c_in, ch[i], cfg.experts_per_stage[i], *sizes[i], cfg)

    if cfg.use_mia:
        c4 = ch[3]
        h4, w4 = sizes[3]
        _conv(rep, "mia.unify", sum(ch), c4, 1, h4, w4)
        if not cfg.disable_ass:
            for k in (3, 5, 7):
                _conv(rep, f"mia.ass.k{k}", c4, c4, k, h4, w4, groups=c4, kind="depthwise")
            for k in (3, 5, 7):
                _conv(rep, f"mia.ass.chain{k}", c4, c4, k, h4, w4, groups=c4, kind="depthwise")
            rep.add("mia.ass.logits", "mixing", 4, 0)
        if not cfg.disable_psr:
            c = c4
            for j in range(cfg.psr_steps):
                _conv(rep, f"mia.psr.step{j + 1}.dw", c, c, 3, h4, w4, groups=c, kind="depthwise")
                _conv(rep, f"mia.psr.step{j + 1}.pw", c, c, 1, h4, w4)
                c //= 2
        _cca(rep, "mia.cca", c4, cfg.cca_ratio)
        for i in range(4):
            _conv(rep, f"skip{i + 1}.proj", c4, ch[i], 1, h4, w4)
            if cfg.use_aacg:
                c = ch[i]
                ah = min(sizes[i][0], cfg.aacg_max_attn_hw)
                aw = min(sizes[i][1], cfg.aacg_max_attn_hw)
                tokens = ah * aw
                # q/k/v/out projections, then QK^T and AV
                flops = 4 * tokens * c * c + 2 * tokens * tokens * c
                rep.add(f"skip{i + 1}.aacg", "attention", 4 * (c * c + c) + 2 * c, flops)

    for j, i in enumerate(range(3, -1, -1)):
        _block(rep, f"dec{i + 1}", ch[i] + ch[i + 1], ch[i], cfg.decoder_experts[j], *sizes[i], cfg)
    _conv(rep, "head", ch[0], 1, 1, height, width)
    return rep
