"""Model hyperparameters and their flat ``key = value`` text format."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Tuple, Union


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    stage_channels: Tuple[int, ...] = (64, 128, 256, 512, 1024)
    experts_per_stage: Tuple[int, ...] = (2, 2, 2, 4, 4)
    # deepest decoder first
    decoder_experts: Tuple[int, ...] = (4, 2, 2, 2)
    input_channels: int = 3
    kernel_size: int = 3
    psr_steps: int = 3
    cca_ratio: int = 16
    aacg_heads: int = 4
    aacg_max_attn_hw: int = 32
    fmblock_kernel: int = 7
    threshold: float = 0.5
    seed: int = 0
    disable_bis: bool = False
    disable_ass: bool = False
    disable_psr: bool = False
    disable_aacg: bool = False
    disable_mia: bool = False

    def __post_init__(self):
        for name in ("stage_channels", "experts_per_stage", "decoder_experts"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if len(self.stage_channels) != 5:
            raise ConfigError("stage_channels needs exactly 5 entries")
        if len(self.experts_per_stage) != 5:
            raise ConfigError("experts_per_stage needs exactly 5 entries")
        if len(self.decoder_experts) != 4:
            raise ConfigError("decoder_experts needs exactly 4 entries")
        if min(self.experts_per_stage + self.decoder_experts) < 1:
            raise ConfigError("every expert count must be >= 1")
        if self.aacg_heads < 1:
            raise ConfigError("aacg_heads must be >= 1")
        for c in self.stage_channels:
            if c < 4 or c % 4:
                raise ConfigError(f"stage channel {c} must be a positive multiple of 4")
            if c % self.aacg_heads:
                raise ConfigError(f"stage channel {c} not divisible by aacg_heads={self.aacg_heads}")
        if self.psr_steps < 1:
            raise ConfigError("psr_steps must be >= 1")
        c4 = self.stage_channels[3]
        if c4 % (2 ** (self.psr_steps - 1)):
            raise ConfigError(f"stage 4 channels ({c4}) not divisible by 2**(psr_steps-1)")
        for name in ("kernel_size", "fmblock_kernel"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"{name} must be a positive odd integer, got {k}")
        if self.input_channels < 1 or self.cca_ratio < 1 or self.aacg_max_attn_hw < 1:
            raise ConfigError("input_channels, cca_ratio and aacg_max_attn_hw must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")

    @property
    def use_mia(self) -> bool:
        return not self.disable_mia

    @property
    def use_aacg(self) -> bool:
        # the gate needs MIA features as its query
        return not (self.disable_aacg or self.disable_mia)

    def with_overrides(self, **kw) -> "ModelConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in kw:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            kw[key] = _parse_value(key, value, cls.__dataclass_fields__[key].default, lineno)
        return cls(**kw)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.to_text())


def _parse_value(key, value, default, lineno):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if isinstance(default, tuple):
            return tuple(int(v) for v in value.split(",") if v.strip())
        if isinstance(default, float):
            return float(value)
        return int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None


TINY = ModelConfig(stage_channels=(8, 16, 32, 64, 128))
