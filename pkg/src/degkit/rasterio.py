"""Raster files.

sRGB images go to 8-bit RGB PNG with a ``degkit-format`` text chunk holding the
format version. Linear images and depth maps use a small float container:

    magic   4 bytes  b"DKFR"
    version 1 byte
    width   uint32 LE
    height  uint32 LE
    chans   uint32 LE
    data    float32 LE, planar (channel-major), chans*height*width values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import FormatError
from .imaging import from_uint8, to_uint8

FORMAT_VERSION = 1
_MAGIC = b"DKFR"
_HEADER = struct.Struct("<4sBIII")


def write_srgb_png(path, img: np.ndarray) -> None:
    info = PngImagePlugin.PngInfo()
    info.add_text("degkit-format", str(FORMAT_VERSION))
    # fixed zlib level keeps the file bytes reproducible
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG", pnginfo=info, compress_level=6)


def read_srgb_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            version = im.info.get("degkit-format")
            if version is not None and int(version) > FORMAT_VERSION:
                raise FormatError(f"{path}: unsupported format version {version}")
            arr = np.asarray(im.convert("RGB"))
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return from_uint8(arr)


def write_float_raster(path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[:, :, None]
    h, w, c = data.shape
    planar = np.ascontiguousarray(np.moveaxis(data, 2, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, FORMAT_VERSION, w, h, c))
        fh.write(planar.tobytes())


def read_float_raster(path) -> np.ndarray:
    """Returns ``(H, W)`` for single-channel files, ``(H, W, C)`` otherwise."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, w, h, c = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FormatError(f"{path}: not a float raster")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 4 * w * h * c
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    planar = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    out = np.moveaxis(planar, 0, 2).astype(np.float64)
    return out[:, :, 0] if c == 1 else out
