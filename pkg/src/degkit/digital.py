"""Digital degradations on encoded sRGB rasters: JPEG quantization and low resolution.

The JPEG path reproduces the lossy half of a baseline encoder (colour
transform, 4:2:0 chroma, blockwise DCT, quality-scaled quantization) without
entropy coding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DomainError
from .imaging import check_srgb

# baseline example tables (ITU-T T.81 Annex K), row-major
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class JpegParams:
    quality: int

    def __post_init__(self):
        if int(self.quality) != self.quality or not 1 <= self.quality <= 100:
            raise DomainError("JPEG quality must be an integer in [1, 100]")


@dataclass(frozen=True)
class LowResParams:
    scale: float

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise DomainError("low-res scale must lie in (0, 1]")


def scaled_table(table: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling: ``clamp(floor((Q * S + 50) / 100), 1, 255)``."""
    if not 1 <= quality <= 100:
        raise DomainError("JPEG quality must be in [1, 100]")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((table * scale + 50) / 100), 1, 255)


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """BT.601 full range on the 0..255 scale."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def quantize_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT-quantize-IDCT every 8x8 block of a plane whose sides are multiples of 8.

    Values are on the 0..255 scale; the usual -128 level shift is applied.
    """
    h, w = plane.shape
    blocks = (plane - 128.0).reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = sfft.dctn(blocks, type=2, axes=(2, 3), norm="ortho")
    coef = round_half_away(coef / table) * table
    back = sfft.idctn(coef, type=2, axes=(2, 3), norm="ortho")
    return back.transpose(0, 2, 1, 3).reshape(h, w) + 128.0


def quantized_coefficients(block: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Integer quantization indices of one 8x8 block (0..255 scale)."""
    coef = sfft.dctn(np.asarray(block, dtype=np.float64) - 128.0, type=2, norm="ortho")
    return round_half_away(coef / table)


def _box_down2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _bilinear_up2(plane: np.ndarray) -> np.ndarray:
    """Centre-aligned 2x bilinear upsampling with edge clamping."""
    h, w = plane.shape
    return resample_matrix(h, 2 * h) @ plane @ resample_matrix(w, 2 * w).T


def apply_jpeg(img, p: JpegParams) -> np.ndarray:
    img = check_srgb(img)
    h, w, _ = img.shape
    hp = -(-h // 16) * 16
    wp = -(-w // 16) * 16
    padded = np.pad(img * 255.0, ((0, hp - h), (0, wp - w), (0, 0)), mode="edge")
    ycc = rgb_to_ycbcr(padded)

    luma = quantize_plane(ycc[..., 0], scaled_table(LUMA_TABLE, p.quality))
    ctab = scaled_table(CHROMA_TABLE, p.quality)
    chroma = []
    for c in (1, 2):
        small = _box_down2(ycc[..., c])
        hs, ws = small.shape
        hq, wq = -(-hs // 8) * 8, -(-ws // 8) * 8
        small = np.pad(small, ((0, hq - hs), (0, wq - ws)), mode="edge")
        small = quantize_plane(small, ctab)[:hs, :ws]
        chroma.append(_bilinear_up2(small))
    out = ycbcr_to_rgb(np.stack([luma, chroma[0], chroma[1]], axis=-1))[:h, :w]
    return np.clip(out / 255.0, 0.0, 1.0)


def box_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Area-averaging matrix mapping ``n_in`` samples to ``n_out`` (n_out <= n_in)."""
    m = np.zeros((n_out, n_in))
    step = n_in / n_out
    for i in range(n_out):
        a, b = i * step, (i + 1) * step
        for j in range(int(math.floor(a)), min(int(math.ceil(b)), n_in)):
            m[i, j] = min(b, j + 1) - max(a, j)
    return m / m.sum(axis=1, keepdims=True)


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Centre-aligned linear interpolation matrix from ``n_in`` to ``n_out`` samples."""
    m = np.zeros((n_out, n_in))
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    x0 = np.floor(x).astype(int)
    x1 = np.minimum(x0 + 1, n_in - 1)
    f = x - x0
    rows = np.arange(n_out)
    np.add.at(m, (rows, x0), 1.0 - f)
    np.add.at(m, (rows, x1), f)
    return m


def low_res_size(w: int, h: int, scale: float) -> tuple[int, int]:
    if math.floor(round(scale * min(w, h), 9)) < 2:
        raise DomainError(f"scale {scale} leaves fewer than 2 pixels")
    return int(math.ceil(round(scale * w, 9))), int(math.ceil(round(scale * h, 9)))


def apply_low_res(img, p: LowResParams) -> np.ndarray:
    img = check_srgb(img)
    h, w, _ = img.shape
    ws, hs = low_res_size(w, h, p.scale)
    if (ws, hs) == (w, h):
        return img.copy()
    small = (box_matrix(h, hs) @ img.reshape(h, w * 3)).reshape(hs, w, 3)
    small = np.matmul(box_matrix(w, ws)[None], small)
    out = (resample_matrix(hs, h) @ small.reshape(hs, ws * 3)).reshape(h, ws, 3)
    out = np.matmul(resample_matrix(ws, w)[None], out)
    return np.clip(out, 0.0, 1.0)


def psnr(a, b, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
