"""Meteorological degradations: haze and water droplets on the lens.

Haze follows Koschmieder's law on a depth normalized by its 95th percentile.
Droplets build a procedural height field, derive surface normals, and refract
the image through it with a small-angle shift plus local blur and a specular
highlight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .imaging import Rng, check_depth, check_linear

DEFAULT_AIRLIGHT = 0.9

# droplet constants
RADIUS_UNIT = 0.08  # droplet radius fraction is multiplied by this * min(w, h)
REFRACTION_GAIN = 30.0  # pixels of shift per unit strength per unit normal tilt
SUPPORT_LO, SUPPORT_HI = 0.05, 0.3
NOISE_AMPLITUDE = 0.1
NOISE_OCTAVES = 3
SPECULAR_AMP = 0.4
SPECULAR_EXP = 32
LIGHT_DIR = np.array([0.3, 0.3, 0.9]) / np.linalg.norm([0.3, 0.3, 0.9])


@dataclass(frozen=True)
class HazeParams:
    density: float
    atmospheric_light: float | tuple = DEFAULT_AIRLIGHT

    def __post_init__(self):
        if self.density < 0:
            raise DomainError("haze density must be >= 0")
        if np.any(np.asarray(self.atmospheric_light, dtype=float) < 0):
            raise DomainError("atmospheric light must be >= 0")


@dataclass(frozen=True)
class DropletParams:
    scale: float
    radius: float
    strength: float
    blur_sigma: float
    blur_kernel: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.blur_kernel < 3 or self.blur_kernel % 2 == 0:
            raise DomainError("blur_kernel must be odd and >= 3")
        if self.scale < 0 or self.radius <= 0 or self.strength < 0 or self.blur_sigma <= 0:
            raise DomainError("droplet parameters out of range")


# ---------------------------------------------------------------------------
# haze
# ---------------------------------------------------------------------------

def normalized_depth(depth: np.ndarray) -> np.ndarray:
    """Depth divided by its 95th-percentile valid value; invalid pixels map to 1."""
    valid = depth > 0
    if not valid.any():
        raise DomainError("depth map has no valid pixels")
    d95 = float(np.percentile(depth[valid], 95))
    out = np.ones(depth.shape, dtype=np.float64)
    out[valid] = depth[valid] / d95
    return out


def haze_transmission(depth: np.ndarray, density: float) -> np.ndarray:
    return np.exp(-density * normalized_depth(depth))


def apply_haze(img, depth, p: HazeParams) -> np.ndarray:
    img = check_linear(img)
    depth = check_depth(depth, img.shape[:2])
    if p.density == 0:
        # still validate the depth so behaviour does not depend on density
        normalized_depth(depth)
        return img.copy()
    t = haze_transmission(depth, p.density)[:, :, None]
    A = np.asarray(p.atmospheric_light, dtype=np.float64)
    return img * t + A * (1.0 - t)


# ---------------------------------------------------------------------------
# droplets
# ---------------------------------------------------------------------------

def bump_profile(rho, radius):
    """Cosine bump: 1 at the centre, 0 (with zero slope) at ``rho = radius``."""
    rho = np.asarray(rho, dtype=np.float64)
    return np.where(rho < radius, 0.5 * (1.0 + np.cos(np.pi * rho / radius)), 0.0)


def _value_noise(w: int, h: int, cell: float, rng: Rng) -> np.ndarray:
    """Smoothly interpolated lattice noise in [0, 1] with the given cell size."""
    nx = int(math.ceil(w / cell)) + 2
    ny = int(math.ceil(h / cell)) + 2
    lattice = rng.random((ny, nx))
    x = np.arange(w) / cell
    y = np.arange(h) / cell
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = x - x0
    fy = y - y0
    sx = fx * fx * (3 - 2 * fx)
    sy = fy * fy * (3 - 2 * fy)
    a = lattice[np.ix_(y0, x0)]
    b = lattice[np.ix_(y0, x0 + 1)]
    c = lattice[np.ix_(y0 + 1, x0)]
    d = lattice[np.ix_(y0 + 1, x0 + 1)]
    top = a + (b - a) * sx[None, :]
    bot = c + (d - c) * sx[None, :]
    return top + (bot - top) * sy[:, None]


def droplet_count(scale: float) -> int:
    # round first so e.g. 0.3 * 10 does not become 4 drops
    return int(math.ceil(round(scale * 10, 9)))


def droplet_height_map(w: int, h: int, p: DropletParams, noise: bool = True) -> np.ndarray:
    """Procedural lens height field: cosine bumps (max-combined) plus value noise."""
    if w < 8 or h < 8:
        raise DomainError("droplet field needs at least 8x8 pixels")
    rng = Rng(p.seed, "droplets")
    unit = RADIUS_UNIT * min(w, h)
    n = droplet_count(p.scale)
    shape_rng = rng.child("bumps")
    radii = p.radius * shape_rng.uniform(0.7, 1.3, n) * unit
    cx = shape_rng.uniform(0, w, n)
    cy = shape_rng.uniform(0, h, n)

    field = np.zeros((h, w))
    for r, x0, y0 in zip(radii, cx, cy):
        j0, j1 = max(int(x0 - r), 0), min(int(x0 + r) + 2, w)
        i0, i1 = max(int(y0 - r), 0), min(int(y0 + r) + 2, h)
        if j0 >= j1 or i0 >= i1:
            continue
        yy, xx = np.mgrid[i0:i1, j0:j1]
        bump = bump_profile(np.hypot(xx - x0, yy - y0), r)
        np.maximum(field[i0:i1, j0:j1], bump, out=field[i0:i1, j0:j1])

    if noise:
        noise_rng = rng.child("noise")
        acc = np.zeros((h, w))
        total = 0.0
        for octave in range(NOISE_OCTAVES):
            weight = 0.5 ** octave
            acc += weight * _value_noise(w, h, unit / 2 ** octave, noise_rng.child(str(octave)))
            total += weight
        field += NOISE_AMPLITUDE * acc / total
    return field


def droplet_normals(height: np.ndarray, unit: float):
    """Unit normals of ``height`` with lateral coordinates measured in ``unit`` pixels."""
    gy, gx = np.gradient(height)
    gx = gx * unit
    gy = gy * unit
    norm = np.sqrt(gx * gx + gy * gy + 1.0)
    return -gx / norm, -gy / norm, 1.0 / norm


def droplet_offsets(height: np.ndarray, strength: float):
    """Refraction sampling offsets ``(du, dv)`` in pixels: gain times the normal tilt."""
    h, w = height.shape
    nx, ny, _ = droplet_normals(height, RADIUS_UNIT * min(h, w))
    gain = REFRACTION_GAIN * strength
    return gain * nx, gain * ny


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def apply_droplets(img, p: DropletParams, height: np.ndarray | None = None) -> np.ndarray:
    """Refract ``img`` through a droplet field.

    A custom ``height`` field (same size as the image) may be passed in place of
    the procedural one.
    """
    img = check_linear(img)
    h, w, _ = img.shape
    unit = RADIUS_UNIT * min(h, w)
    if height is None:
        height = droplet_height_map(w, h, p)
    elif height.shape != (h, w):
        raise DomainError("height field must match the image size")

    nx, ny, nz = droplet_normals(height, unit)
    du, dv = droplet_offsets(height, p.strength)
    vv, uu = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [vv + dv, uu + du]

    refracted = np.empty_like(img)
    for c in range(3):
        refracted[:, :, c] = ndimage.map_coordinates(img[:, :, c], coords, order=1, mode="nearest")

    support = _smoothstep((height - SUPPORT_LO) / (SUPPORT_HI - SUPPORT_LO))
    if not support.any():
        return np.maximum(refracted, 0.0)

    truncate = (p.blur_kernel // 2) / p.blur_sigma
    blurred = ndimage.gaussian_filter(refracted, sigma=(p.blur_sigma, p.blur_sigma, 0),
                                      mode="nearest", truncate=truncate)
    s = support[:, :, None]
    out = refracted * (1.0 - s) + blurred * s

    # Phong highlight with view along +z: reflect(l, n) . v = 2 (n.l) n_z - l_z
    ndotl = nx * LIGHT_DIR[0] + ny * LIGHT_DIR[1] + nz * LIGHT_DIR[2]
    spec = np.maximum(2.0 * ndotl * nz - LIGHT_DIR[2], 0.0) ** SPECULAR_EXP
    out = out + (SPECULAR_AMP * spec * support)[:, :, None]
    return np.maximum(out, 0.0)
