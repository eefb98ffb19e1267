"""Named parameter storage, seeded initialisation and the binary weights file.

File layout (all integers little-endian)::

    magic        8 bytes   b"ABCDWNET"
    version      u32       1
    config_len   u32       byte length of the config text
    config       utf-8     ModelConfig.to_text()
    count        u32       number of records
    count x record:
        name_len u16, name utf-8
        dtype    u8        1 = float32
        ndim     u8
        dims     u32 * ndim
        nbytes   u64
        payload  nbytes    raw little-endian values, C order

Anything after the last record is an error.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .abc_mechanism import ASS_KERNELS, cca_hidden
from .config import ModelConfig
from .tensor_core import DTYPE

MAGIC = b"ABCDWNET"
VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4")}


class WeightsError(ValueError):
    """Missing, unexpected or mis-shaped parameter, or a corrupt file."""


class WeightStore(dict):
    """Ordered ``path -> float32 array`` mapping."""

    def scalar_count(self) -> int:
        return sum(int(v.size) for v in self.values())

    def same_as(self, other: "WeightStore") -> bool:
        if list(self) != list(other):
            return False
        return all(self[k].shape == other[k].shape and
                   self[k].tobytes() == other[k].tobytes() for k in self)


# (path, shape, init kind, fan_in)
ParamSpec = Tuple[str, Tuple[int, ...], str, int]


def _conv(prefix, c_out, c_in_per_group, k, bias=True) -> List[ParamSpec]:
    out = [(f"{prefix}.weight", (c_out, c_in_per_group, k, k), "kaiming", c_in_per_group * k * k)]
    if bias:
        out.append((f"{prefix}.bias", (c_out,), "zeros", 0))
    return out


def _bn(prefix, c) -> List[ParamSpec]:
    return [(f"{prefix}.mean", (c,), "zeros", 0), (f"{prefix}.var", (c,), "ones", 0),
            (f"{prefix}.gamma", (c,), "ones", 0), (f"{prefix}.beta", (c,), "zeros", 0)]


def _dynconv(prefix, c_in, c_out, k, m) -> List[ParamSpec]:
    return [(f"{prefix}.kernels", (m, c_out, c_in, k, k), "kaiming", c_in * k * k),
            (f"{prefix}.mlp_w1", (c_in, c_in), "kaiming", c_in),
            (f"{prefix}.mlp_w2", (m, c_in), "kaiming", c_in)]


def _cca(prefix, c, ratio) -> List[ParamSpec]:
    h = cca_hidden(c, ratio)
    return [(f"{prefix}.w2", (h, c), "kaiming", c), (f"{prefix}.b2", (h,), "zeros", 0),
            (f"{prefix}.w3", (c, h), "kaiming", h), (f"{prefix}.b3", (c,), "zeros", 0)]


def _block(prefix, c_in, c_out, m, cfg: ModelConfig) -> List[ParamSpec]:
    k = cfg.kernel_size
    specs = (_dynconv(f"{prefix}.ddc.first", c_in, c_out, k, m) + _bn(f"{prefix}.ddc.norm1", c_out)
             + _dynconv(f"{prefix}.ddc.second", c_out, c_out, k, m) + _bn(f"{prefix}.ddc.norm2", c_out))
    if not cfg.disable_bis:
        b, half = f"{prefix}.bis", c_out // 2
        specs += _conv(f"{b}.fmblock.dw", half, 1, cfg.fmblock_kernel)
        specs += _conv(f"{b}.fmblock.pw", half, half, 1)
        specs += _cca(f"{b}.fmblock.cca", c_out, cfg.cca_ratio)
        specs += _conv(f"{b}.spatial.dw1", c_out, 1, 3) + _bn(f"{b}.spatial.norm", c_out)
        specs += _conv(f"{b}.spatial.dw2", c_out, 1, 3)
        specs += _conv(f"{b}.fusion.dw", 2 * c_out, 1, 3) + _conv(f"{b}.fusion.pw", c_out, 2 * c_out, 1)
    return specs


def param_specs(cfg: ModelConfig) -> List[ParamSpec]:
    """Every parameter the config implies, in canonical order."""
    ch = cfg.stage_channels
    specs: List[ParamSpec] = []
    for i in range(5):
        c_in = cfg.input_channels if i == 0 else ch[i - 1]
        specs += _block(f"enc{i + 1}", c_in, ch[i], cfg.experts_per_stage[i], cfg)

    if cfg.use_mia:
        c4 = ch[3]
        specs += _conv("mia.unify", c4, sum(ch), 1)
        if not cfg.disable_ass:
            for k in ASS_KERNELS:
                specs += _conv(f"mia.ass.k{k}", c4, 1, k)
            for k in ASS_KERNELS:
                specs += _conv(f"mia.ass.chain{k}", c4, 1, k)
            specs.append(("mia.ass.logits", (len(ASS_KERNELS) + 1,), "zeros", 0))
        if not cfg.disable_psr:
            c = c4
            for j in range(cfg.psr_steps):
                specs += _conv(f"mia.psr.step{j + 1}.dw", c, 1, 3) + _conv(f"mia.psr.step{j + 1}.pw", c, c, 1)
                c //= 2
        specs += _cca("mia.cca", c4, cfg.cca_ratio)
        for i in range(4):
            specs += _conv(f"skip{i + 1}.proj", ch[i], c4, 1)
            if cfg.use_aacg:
                c, p = ch[i], f"skip{i + 1}.aacg"
                for name in ("q", "k", "v", "o"):
                    specs += [(f"{p}.w{name}", (c, c), "kaiming", c), (f"{p}.b{name}", (c,), "zeros", 0)]
                specs += [(f"{p}.ln.gamma", (c,), "ones", 0), (f"{p}.ln.beta", (c,), "zeros", 0)]

    for j, i in enumerate(range(3, -1, -1)):
        specs += _block(f"dec{i + 1}", ch[i] + ch[i + 1], ch[i], cfg.decoder_experts[j], cfg)
    specs += _conv("head", 1, ch[0], 1)
    return specs


def expected_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    return {path: shape for path, shape, _, _ in param_specs(cfg)}


def init_weights(cfg: ModelConfig, seed: Optional[int] = None) -> WeightStore:
    """Deterministic init: uniform(+-2/sqrt(fan_in)) weights, identity norms, zero biases."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    store = WeightStore()
    for path, shape, kind, fan_in in param_specs(cfg):
        if kind == "kaiming":
            bound = 2.0 / np.sqrt(fan_in)
            store[path] = rng.uniform(-bound, bound, size=shape).astype(DTYPE)
        elif kind == "ones":
            store[path] = np.ones(shape, DTYPE)
        else:
            store[path] = np.zeros(shape, DTYPE)
    return store


def validate_store(store: WeightStore, cfg: ModelConfig):
    expected = expected_shapes(cfg)
    for path in store:
        if path not in expected:
            raise WeightsError(f"unexpected parameter {path!r}")
    for path, shape in expected.items():
        if path not in store:
            raise WeightsError(f"missing parameter {path!r}")
        if tuple(store[path].shape) != shape:
            raise WeightsError(f"parameter {path!r} has shape {tuple(store[path].shape)}, expected {shape}")


def dump_weights(store: WeightStore, cfg: ModelConfig) -> bytes:
    buf = io.BytesIO()
    text = cfg.to_text().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(text)))
    buf.write(text)
    buf.write(struct.pack("<I", len(store)))
    for path, arr in store.items():
        name = path.encode("utf-8")
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        buf.write(struct.pack("<H", len(name)) + name)
        buf.write(struct.pack("<BB", 1, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<Q", len(data)))
        buf.write(data)
    return buf.getvalue()


def save_weights(store: WeightStore, cfg: ModelConfig, path: Union[str, Path]):
    Path(path).write_bytes(dump_weights(store, cfg))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsError(f"truncated weights file while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_weights(data: bytes) -> Tuple[ModelConfig, WeightStore]:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise WeightsError("not a weights file (bad magic)")
    version, text_len = r.unpack("<II", "header")
    if version != VERSION:
        raise WeightsError(f"unsupported weights format version {version}")
    cfg = ModelConfig.from_text(r.take(text_len, "config").decode("utf-8"))
    (count,) = r.unpack("<I", "record count")
    store = WeightStore()
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        code, ndim = r.unpack("<BB", f"{name} dtype")
        if code not in _DTYPE_CODES:
            raise WeightsError(f"parameter {name!r}: unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}I", f"{name} shape")
        (nbytes,) = r.unpack("<Q", f"{name} size")
        dtype = _DTYPE_CODES[code]
        if nbytes != int(np.prod(shape)) * dtype.itemsize:
            raise WeightsError(f"parameter {name!r}: payload size {nbytes} does not match shape {shape}")
        if name in store:
            raise WeightsError(f"duplicate parameter {name!r}")
        store[name] = np.frombuffer(r.take(nbytes, name), dtype=dtype).astype(DTYPE).reshape(shape)
    if r.pos != len(data):
        raise WeightsError(f"{len(data) - r.pos} trailing bytes after last record")
    return cfg, store


def load_weights(path: Union[str, Path], cfg: Optional[ModelConfig] = None) -> Tuple[ModelConfig, WeightStore]:
    """Read a weights file and check it against ``cfg`` (default: the echoed config)."""
    file_cfg, store = parse_weights(Path(path).read_bytes())
    cfg = cfg or file_cfg
    validate_store(store, cfg)
    return cfg, store
