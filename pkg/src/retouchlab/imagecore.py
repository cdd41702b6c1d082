"""Pixel buffers, color conversions, and PNG file I/O.

The working space is display-referred sRGB-encoded floats in [0, 1]; no
linearization happens anywhere in the package (retouching sliders are
defined against display values). Quantization on save is round-half-up so
files are bit-exact reproducible across platforms.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _png
from .errors import CorruptData, DimensionMismatch, IoError

#: Rec.709 luma coefficients, used by tone-region weights and histograms.
LUMA_R, LUMA_G, LUMA_B = 0.2126, 0.7152, 0.0722


class PixelRGB(NamedTuple):
    """A single pixel; channel order is fixed R, G, B."""

    r: float
    g: float
    b: float


@dataclass(frozen=True)
class Image:
    """Immutable planar RGB buffer of unit-interval floats.

    `data` has shape (height, width, 3), dtype float64, and is marked
    read-only so a constructed Image can be shared across threads.
    Intermediate pipeline buffers may exceed [0, 1]; anything saved or
    returned as pipeline output is clamped first.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {self.data.shape} != ({self.height}, {self.width}, 3)"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data contains non-finite values")
        self.data.flags.writeable = False

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        h, w = arr.shape[:2]
        return cls(width=w, height=h, data=arr)

    def pixels(self) -> np.ndarray:
        """Writable flat (N, 3) copy of the pixel values."""
        return self.data.reshape(-1, 3).copy()

    def pixel(self, x: int, y: int) -> PixelRGB:
        return PixelRGB(*(float(v) for v in self.data[y, x]))


def load_image(path: str | os.PathLike) -> Image:
    """Load an 8- or 16-bit RGB/RGBA PNG into unit-interval floats.

    Alpha is discarded. Raises IoError if the file is missing,
    UnsupportedFormat for palette/grayscale/non-PNG files, and
    CorruptData for damaged ones.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise IoError(f"no such file: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    raw = _png.decode(blob)
    scale = 255.0 if raw.dtype == np.uint8 else 65535.0
    rgb = raw[:, :, :3].astype(np.float64) / scale
    return Image.from_array(rgb)


def save_image(img: Image, path: str | os.PathLike, depth: int = 8) -> None:
    """Write `img` as an RGB PNG at bit depth 8 or 16.

    Channels are clamped to [0, 1] then quantized with round-half-up,
    matching the cross-implementation reproducibility contract.
    """
    if depth not in (8, 16):
        raise ValueError(f"depth must be 8 or 16, got {depth}")
    full = (1 << depth) - 1
    q = np.floor(np.clip(img.data, 0.0, 1.0) * full + 0.5)
    pixels = q.astype(np.uint8 if depth == 8 else np.uint16)
    try:
        with open(path, "wb") as fh:
            fh.write(_png.encode(pixels))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def quantize(img: Image, depth: int = 8) -> Image:
    """Clamp and round-half-up exactly as save_image would store it."""
    if depth not in (8, 16):
        raise ValueError(f"depth must be 8 or 16, got {depth}")
    full = (1 << depth) - 1
    q = np.floor(np.clip(img.data, 0.0, 1.0) * full + 0.5) / full
    return Image.from_array(q)


def require_same_size(a: Image, b: Image) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )


def luma(p: PixelRGB) -> float:
    """Rec.709 luma; linear in each channel, identity on grays."""
    return LUMA_R * p.r + LUMA_G * p.g + LUMA_B * p.b


def luma_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorized luma over an (..., 3) array."""
    return LUMA_R * rgb[..., 0] + LUMA_G * rgb[..., 1] + LUMA_B * rgb[..., 2]


def rgb_to_hsv(p: PixelRGB) -> tuple[float, float, float]:
    """Standard hexcone conversion; hue in [0, 360), hue = 0 when sat = 0."""
    v = max(p.r, p.g, p.b)
    c = v - min(p.r, p.g, p.b)
    s = 0.0 if v == 0.0 else c / v
    if c == 0.0:
        h = 0.0
    elif v == p.r:
        h = 60.0 * (((p.g - p.b) / c) % 6.0)
    elif v == p.g:
        h = 60.0 * ((p.b - p.r) / c + 2.0)
    else:
        h = 60.0 * ((p.r - p.g) / c + 4.0)
    if h >= 360.0:
        h -= 360.0
    return h, s, v


def hsv_to_rgb(h: float, s: float, v: float) -> PixelRGB:
    c = v * s
    hh = (h % 360.0) / 60.0
    x = c * (1.0 - abs(hh % 2.0 - 1.0))
    sector = int(hh) % 6
    rc, gc, bc = (
        (c, x, 0.0), (x, c, 0.0), (0.0, c, x),
        (0.0, x, c), (x, 0.0, c), (c, 0.0, x),
    )[sector]
    m = v - c
    return PixelRGB(rc + m, gc + m, bc + m)


def rgb_to_hsv_array(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized hexcone conversion over an (..., 3) array."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = np.max(rgb, axis=-1)
    c = v - np.min(rgb, axis=-1)
    s = np.where(v > 0.0, c / np.where(v > 0.0, v, 1.0), 0.0)
    safe_c = np.where(c > 0.0, c, 1.0)
    h_r = ((g - b) / safe_c) % 6.0
    h_g = (b - r) / safe_c + 2.0
    h_b = (r - g) / safe_c + 4.0
    h = np.where(v == r, h_r, np.where(v == g, h_g, h_b)) * 60.0
    h = np.where(c > 0.0, h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    return h, s, v


def hsv_to_rgb_array(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    c = v * s
    hh = (h % 360.0) / 60.0
    x = c * (1.0 - np.abs(hh % 2.0 - 1.0))
    sector = hh.astype(np.int64) % 6
    zeros = np.zeros_like(c)
    r = np.choose(sector, [c, x, zeros, zeros, x, c])
    g = np.choose(sector, [x, c, c, x, zeros, zeros])
    b = np.choose(sector, [zeros, zeros, x, c, c, x])
    m = v - c
    return np.stack([r + m, g + m, b + m], axis=-1)


def read_file_bytes(path: str | os.PathLike) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise IoError(f"no such file: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def decode_image_bytes(blob: bytes) -> Image:
    """Decode in-memory PNG bytes; same contract as load_image."""
    raw = _png.decode(blob)
    if raw.size == 0:
        raise CorruptData("empty image")
    scale = 255.0 if raw.dtype == np.uint8 else 65535.0
    return Image.from_array(raw[:, :, :3].astype(np.float64) / scale)
