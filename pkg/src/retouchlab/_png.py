"""Minimal PNG codec for 8/16-bit RGB and RGBA images.

Hand-rolled on zlib/struct because the mainstream readers break contracts
this package needs: Pillow silently decodes 16-bit RGB PNGs to 8 bits, and
OpenCV silently expands palette files instead of rejecting them. Scope is
deliberately narrow: truecolor (with or without alpha), no interlacing, no
palette, no grayscale.

Decoder output is a (h, w, channels) uint8 or uint16 array; the encoder
takes (h, w, 3) arrays of the same dtypes and always writes filter 0
scanlines with a fixed zlib level, so identical pixels yield identical
bytes.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptData, UnsupportedFormat

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_ZLIB_LEVEL = 6


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode(pixels: np.ndarray) -> bytes:
    """Encode an (h, w, 3) uint8/uint16 array as a truecolor PNG."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) array, got {pixels.shape}")
    h, w = pixels.shape[:2]
    if pixels.dtype == np.uint8:
        depth = 8
        raw = pixels
    elif pixels.dtype == np.uint16:
        depth = 16
        raw = pixels.astype(">u2")
    else:
        raise ValueError(f"unsupported dtype {pixels.dtype}")
    row_bytes = raw.reshape(h, -1).view(np.uint8).reshape(h, -1)
    scanlines = np.concatenate(
        [np.zeros((h, 1), dtype=np.uint8), row_bytes], axis=1
    ).tobytes()
    ihdr = struct.pack(">IIBBBBB", w, h, depth, 2, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(scanlines, _ZLIB_LEVEL))
        + _chunk(b"IEND", b"")
    )


def decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes to (h, w, channels) uint8/uint16; channels is 3 or 4."""
    if len(data) < 8 or data[:8] != _SIGNATURE:
        raise UnsupportedFormat("not a PNG file")
    pos = 8
    ihdr = None
    idat = bytearray()
    seen_iend = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise CorruptData("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(data):
            raise CorruptData(f"truncated {tag!r} chunk")
        payload = data[pos + 8 : body_end]
        (crc,) = struct.unpack(">I", data[body_end : body_end + 4])
        if zlib.crc32(tag + payload) & 0xFFFFFFFF != crc:
            raise CorruptData(f"bad CRC in {tag!r} chunk")
        if tag == b"IHDR":
            if ihdr is not None:
                raise CorruptData("duplicate IHDR")
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            seen_iend = True
            break
        pos = body_end + 4
    if ihdr is None:
        raise CorruptData("missing IHDR")
    if not seen_iend:
        raise CorruptData("missing IEND")
    w, h, depth, color_type, compression, filt, interlace = ihdr
    if color_type == 3:
        raise UnsupportedFormat("palette PNGs are not supported")
    if color_type in (0, 4):
        raise UnsupportedFormat("grayscale PNGs are not supported")
    if color_type not in (2, 6):
        raise CorruptData(f"unknown color type {color_type}")
    if depth not in (8, 16):
        raise UnsupportedFormat(f"unsupported bit depth {depth}")
    if interlace != 0:
        raise UnsupportedFormat("interlaced PNGs are not supported")
    if compression != 0 or filt != 0:
        raise CorruptData("unknown compression or filter method")
    if w == 0 or h == 0:
        raise CorruptData("zero-sized image")
    channels = 3 if color_type == 2 else 4
    bypp = channels * (depth // 8)  # filter offset, bytes per pixel
    stride = w * bypp
    try:
        plain = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise CorruptData(f"bad IDAT stream: {exc}") from exc
    if len(plain) != h * (stride + 1):
        raise CorruptData("pixel data has wrong length")
    rows = np.frombuffer(plain, dtype=np.uint8).reshape(h, stride + 1)
    out = np.empty((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    for y in range(h):
        ftype = rows[y, 0]
        raw = rows[y, 1:].astype(np.int32)
        if ftype == 0:
            cur = raw
        elif ftype == 1:  # Sub: per-lane cumulative sum mod 256
            lanes = raw.reshape(-1, bypp)
            cur = (np.cumsum(lanes, axis=0) % 256).reshape(-1)
        elif ftype == 2:  # Up
            cur = (raw + prev) % 256
        elif ftype == 3:  # Average
            cur = np.empty(stride, dtype=np.int32)
            for i in range(stride):
                left = cur[i - bypp] if i >= bypp else 0
                cur[i] = (raw[i] + (left + prev[i]) // 2) % 256
        elif ftype == 4:  # Paeth
            cur = np.empty(stride, dtype=np.int32)
            for i in range(stride):
                a = cur[i - bypp] if i >= bypp else 0
                b = prev[i]
                c = prev[i - bypp] if i >= bypp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                cur[i] = (raw[i] + pred) % 256
        else:
            raise CorruptData(f"unknown scanline filter {ftype}")
        out[y] = cur
        prev = cur
    if depth == 8:
        return out.reshape(h, w, channels)
    pix = out.reshape(h, -1).view(">u2").astype(np.uint16)
    return pix.reshape(h, w, channels)
