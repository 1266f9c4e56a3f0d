"""Photometric degradations in linear light: low light and over-exposure.

Both share a Poisson-Gaussian sensor model: the exposed signal ``e * I`` is
converted to ``lambda = e * I / k`` photo-electrons, shot noise is Poisson in
that count, and read noise is additive Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .imaging import Rng, check_linear

POISSON_EXACT_LIMIT = 30.0  # below this lambda use inverse-transform sampling
BLOCK = 64  # pixel tile owning one random stream


@dataclass(frozen=True)
class SensorModel:
    gain: float = 2.5e-4
    read_sigma: float = 2e-3

    def __post_init__(self):
        if not self.gain > 0:
            raise DomainError("sensor gain must be positive")
        if self.read_sigma < 0:
            raise DomainError("read noise sigma must be >= 0")


@dataclass(frozen=True)
class ExposureParams:
    exposure: float

    def __post_init__(self):
        if not self.exposure > 0:
            raise DomainError("exposure must be positive")


def _poisson_inverse(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF Poisson draws; ``lam`` and ``u`` are flat arrays of equal length."""
    out = np.zeros(lam.shape, dtype=np.float64)
    p = np.exp(-lam)
    cdf = p.copy()
    idx = np.flatnonzero(u > cdf)
    k = 0
    while idx.size:
        k += 1
        p_i = p[idx] * lam[idx] / k
        p[idx] = p_i
        cdf[idx] += p_i
        done = u[idx] <= cdf[idx]
        out[idx[done]] = k
        idx = idx[~done]
        # cdf can stall just below u through rounding far in the tail
        if k >= 200:
            out[idx] = k
            break
    return out


def poisson_sample(lam, uniform: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Poisson draws from pre-generated uniforms and normals (same shape as ``lam``).

    ``lam < 30`` uses the exact inverse transform, larger rates use
    ``round(N(lam, lam))`` clamped at zero.
    """
    lam = np.asarray(lam, dtype=np.float64)
    flat = lam.ravel()
    out = np.empty_like(flat)
    small = flat < POISSON_EXACT_LIMIT
    if small.any():
        out[small] = _poisson_inverse(flat[small], uniform.ravel()[small])
    big = ~small
    if big.any():
        fb = flat[big]
        out[big] = np.maximum(np.rint(fb + np.sqrt(fb) * normal.ravel()[big]), 0.0)
    return out.reshape(lam.shape)


def _block_draws(shape, rng: Rng):
    """Uniforms and two normal fields, each tile drawn from its own stream.

    Streams are keyed by tile index so results do not depend on how callers
    split the image.
    """
    h, w = shape[:2]
    rest = tuple(shape[2:])
    u = np.empty(shape)
    z_shot = np.empty(shape)
    z_read = np.empty(shape)
    for i0 in range(0, h, BLOCK):
        for j0 in range(0, w, BLOCK):
            i1, j1 = min(i0 + BLOCK, h), min(j0 + BLOCK, w)
            sub = (i1 - i0, j1 - j0) + rest
            r = rng.child(f"block:{i0 // BLOCK}:{j0 // BLOCK}").generator
            u[i0:i1, j0:j1] = r.random(sub)
            z_shot[i0:i1, j0:j1] = r.standard_normal(sub)
            z_read[i0:i1, j0:j1] = r.standard_normal(sub)
    return u, z_shot, z_read


def apply_sensor_noise(img, e: ExposureParams, s: SensorModel, rng: Rng) -> np.ndarray:
    """``Poisson(e * I / k) * k + N(0, read_sigma^2)``, unclamped."""
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0) or not np.all(np.isfinite(img)):
        raise DomainError("sensor input must be finite and >= 0")
    lam = e.exposure * img / s.gain
    u, z_shot, z_read = _block_draws(img.shape, rng)
    counts = poisson_sample(lam, u, z_shot)
    return counts * s.gain + s.read_sigma * z_read


def apply_low_light(img, e: ExposureParams, s: SensorModel, rng: Rng) -> np.ndarray:
    if e.exposure > 1:
        raise DomainError("low light needs exposure <= 1; use over-exposure instead")
    img = check_linear(img)
    return np.clip(apply_sensor_noise(img, e, s, rng), 0.0, 1.0)


def apply_over_exposure(img, e: ExposureParams, s: SensorModel, rng: Rng) -> np.ndarray:
    if e.exposure < 1:
        raise DomainError("over-exposure needs exposure >= 1; use low light instead")
    img = check_linear(img)
    return np.clip(apply_sensor_noise(img, e, s, rng), 0.0, 1.0)


def poisson_gaussian_variance(intensity: float, e: ExposureParams, s: SensorModel) -> float:
    """Analytic variance ``k * e * I + read_sigma^2`` of the unclamped output."""
    return s.gain * e.exposure * intensity + s.read_sigma ** 2


def snr_db(intensity: float, e: ExposureParams, s: SensorModel) -> float:
    signal = e.exposure * intensity
    return 20.0 * math.log10(signal / math.sqrt(poisson_gaussian_variance(intensity, e, s)))
