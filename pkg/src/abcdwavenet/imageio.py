"""Image file helpers: 8-bit PNG/PPM, 16-bit PNG depth and PFM."""
from __future__ import annotations

import re
import sys
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .tensor_core import DTYPE

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm", ".jpg", ".jpeg", ".bmp")


class ImageFormatError(ValueError):
    pass


def read_rgb(path: PathLike) -> np.ndarray:
    """(H, W, 3) float32 in [0, 1]."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I", "F"):
                raise ImageFormatError(f"{path}: expected an 8-bit image, got mode {im.mode}")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from None
    return arr.astype(DTYPE) / DTYPE(255)


def to_uint8(x) -> np.ndarray:
    """Round-to-nearest quantisation of [0, 1] values."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def write_rgb(path: PathLike, img):
    Image.fromarray(to_uint8(img), mode="RGB").save(path)


def write_gray(path: PathLike, img):
    Image.fromarray(to_uint8(img), mode="L").save(path)


def read_mask(path: PathLike) -> np.ndarray:
    """Binary (H, W) uint8 mask; pixel values > 127 count as 1."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "1", "P"):
                raise ImageFormatError(f"{path}: mask must be single-channel 8-bit, got mode {im.mode}")
            if im.mode == "P":
                rgb = np.asarray(im.convert("RGB"))
                if not (np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 1], rgb[..., 2])):
                    raise ImageFormatError(f"{path}: palette mask is not grayscale")
                arr = rgb[..., 0]
            else:
                arr = np.asarray(im.convert("L"))
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot read mask ({exc})") from None
    return (arr > 127).astype(np.uint8)


def write_mask(path: PathLike, mask):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)


def read_png16(path: PathLike) -> np.ndarray:
    """Raw 16-bit grayscale values as float64 (H, W)."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
                raise ImageFormatError(f"{path}: depth PNG must be 16-bit single-channel, got mode {im.mode}")
            arr = np.asarray(im).astype(np.float64)
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot read depth ({exc})") from None
    return arr


def write_png16(path: PathLike, values):
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ImageFormatError("16-bit PNG writer expects a 2-D array")
    Image.fromarray(np.clip(arr, 0, 65535).astype(np.uint16)).save(path)


def read_pfm(path: PathLike) -> np.ndarray:
    """Single-channel PFM ("Pf") as float64 (H, W), top row first."""
    data = Path(path).read_bytes()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if not m:
        raise ImageFormatError(f"{path}: not a PFM file")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    if kind != b"Pf":
        raise ImageFormatError(f"{path}: PFM depth must be single-channel (Pf), got {kind.decode()}")
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    if len(body) < w * h * 4:
        raise ImageFormatError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(body[:w * h * 4], dtype=dtype).reshape(h, w)
    # PFM rows run bottom-to-top
    return arr[::-1].astype(np.float64)


def write_pfm(path: PathLike, values):
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ImageFormatError("PFM writer expects a 2-D array")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(arr[::-1]).tobytes())


def list_images(directory: PathLike):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
