"""Depth-modulated fog via the atmospheric scattering model.

    I = J * t + A * (1 - t),   t = exp(-kappa * d)
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .imageio import ImageFormatError, read_pfm, read_png16
from .tensor_core import DTYPE


@dataclass(frozen=True)
class FogParams:
    kappa: float = 1.0          # scattering coefficient per unit depth
    atmos_light: float = 0.9    # A, normalised
    depth_scale: float = 1.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not 0.0 <= self.atmos_light <= 1.0:
            raise ValueError(f"atmospheric light must lie in [0, 1], got {self.atmos_light}")
        if not self.depth_scale >= 0:
            raise ValueError(f"depth scale must be >= 0, got {self.depth_scale}")


def _check_depth(depth) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"depth map must be 2-D (H, W), got shape {d.shape}")
    if not np.all(np.isfinite(d)) or d.min() < 0:
        raise ValueError("depth values must be finite and non-negative")
    return d


def transmission(depth, params: FogParams) -> np.ndarray:
    d = _check_depth(depth)
    return np.exp(-params.kappa * d)


def synthesize_fog(image, depth, params: FogParams) -> np.ndarray:
    """Foggy version of an (H, W, C) or (H, W) image with values in [0, 1]."""
    j = np.asarray(image, dtype=np.float64)
    if j.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {j.shape}")
    t = transmission(depth, params)
    if t.shape != j.shape[:2]:
        raise ValueError(f"depth map {t.shape} does not match image {j.shape[:2]}")
    if j.min() < 0 or j.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    if j.ndim == 3:
        t = t[..., None]
    a = params.atmos_light
    out = j * t + a * (1.0 - t)
    return np.clip(out, 0.0, 1.0).astype(DTYPE)


def constant_depth(height: int, width: int, value: float = 1.0) -> np.ndarray:
    return np.full((height, width), value, dtype=np.float64)


def load_depth(path: Union[str, Path], depth_scale: float = 1.0) -> np.ndarray:
    """Depth from a 16-bit PNG (raw / 65535 * scale) or a Pf PFM (raw * scale)."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        raw = read_pfm(path)
    elif path.suffix.lower() == ".png":
        raw = read_png16(path) / 65535.0
    else:
        raise ImageFormatError(f"{path}: depth must be .png (16-bit) or .pfm")
    return _check_depth(raw * depth_scale)
