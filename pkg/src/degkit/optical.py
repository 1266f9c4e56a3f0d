"""Optical and dynamic degradations: defocus, fisheye distortion, motion blur.

All three operate on linear images. Defocus is a post-render, spatially varying
Gaussian gather whose per-pixel sigma is the circle-of-confusion radius
``a * |d - f| / d`` (pixels). Distortion remaps a pinhole render into an
equidistant fisheye with a radial polynomial in the ray angle. Motion blur
averages re-renders along a slerped camera trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .errors import DomainError, SolverError
from .imaging import CameraView, Rng, check_depth, check_linear, matrix_to_quat, quat_from_axis_angle, quat_to_matrix
from .render import Renderer, trajectory_poses

# Gaussian levels used by the defocus gather; intermediate sigmas blend the two
# neighbouring levels with weights chosen in variance space.
SIGMA_CAP = 64.0
_SIGMA_LEVELS = np.concatenate([[0.0], 1.5 ** np.arange(0, 12)])  # 1 .. ~86


@dataclass(frozen=True)
class DefocusParams:
    aperture: float
    focus_depth: float

    def __post_init__(self):
        if not (self.aperture > 0 and self.focus_depth > 0):
            raise DomainError("aperture and focus_depth must be positive")


@dataclass(frozen=True)
class DistortionParams:
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    max_theta: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.max_theta <= math.pi / 2:
            raise DomainError("max_theta must lie in (0, pi/2]")

    @property
    def ks(self) -> tuple:
        return (self.k1, self.k2, self.k3, self.k4)


@dataclass(frozen=True)
class MotionBlurParams:
    trans: float
    rot: float
    sub_steps: int = 80
    direction_seed: int = 0

    def __post_init__(self):
        if self.sub_steps < 1:
            raise DomainError("sub_steps must be >= 1")
        if self.trans < 0 or self.rot < 0:
            raise DomainError("motion magnitudes must be non-negative")


# ---------------------------------------------------------------------------
# defocus
# ---------------------------------------------------------------------------

def coc_radius(d, p: DefocusParams):
    """Circle-of-confusion radius in pixels, ``a * |d - f| / d``."""
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(~(d_arr > 0)):
        raise DomainError("depth must be positive")
    r = p.aperture * np.abs(d_arr - p.focus_depth) / d_arr
    return float(r) if np.ndim(r) == 0 else r


def _gaussian_1d_spectrum(sigma: float, n: int, real: bool) -> np.ndarray:
    """DFT of a unit-mass sampled Gaussian placed circularly on an n-point grid."""
    half = min(n // 2, int(math.ceil(6 * sigma)) + 1)
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    k = np.zeros(n)
    np.add.at(k, x.astype(np.int64) % n, g)
    return sfft.rfft(k) if real else sfft.fft(k)


def defocus_sigma_map(depth: np.ndarray, p: DefocusParams) -> np.ndarray:
    """Per-pixel blur sigma; invalid (zero) depth takes the d -> inf limit ``a``."""
    valid = depth > 0
    sigma = np.full(depth.shape, p.aperture, dtype=np.float64)
    sigma[valid] = coc_radius(depth[valid], p) if valid.any() else sigma[valid]
    return np.minimum(sigma, SIGMA_CAP)


def gaussian_gather(img: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Blur each pixel with its own isotropic Gaussian (replicate-edge borders).

    Each output pixel mixes the two precomputed Gaussian levels around its
    sigma so the mixture's second moment equals ``sigma**2`` exactly.
    """
    h, w, _ = img.shape
    smax = float(sigma.max())
    if smax <= 0:
        return img.copy()
    hi_idx = int(np.searchsorted(_SIGMA_LEVELS, smax))
    levels = _SIGMA_LEVELS[: hi_idx + 1]
    lo_idx = max(int(np.searchsorted(_SIGMA_LEVELS, float(sigma.min()), side="right")) - 1, 0)

    pad = int(math.ceil(4 * levels[-1])) + 1
    hp = sfft.next_fast_len(h + 2 * pad)
    wp = sfft.next_fast_len(w + 2 * pad, real=True)
    padded = np.pad(img, ((pad, hp - h - pad), (pad, wp - w - pad), (0, 0)), mode="edge")
    spec = sfft.rfft2(padded, axes=(0, 1))

    # bracket index k: levels[k] <= sigma < levels[k+1]
    k = np.clip(np.searchsorted(levels, sigma, side="right") - 1, 0, len(levels) - 2)
    s_lo = levels[k]
    s_hi = levels[k + 1]
    w_lo = (s_hi ** 2 - sigma ** 2) / (s_hi ** 2 - s_lo ** 2)
    w_lo = np.clip(w_lo, 0.0, 1.0)

    out = np.zeros_like(img)
    for j in range(lo_idx, len(levels)):
        in_lo = k == j
        in_hi = k == j - 1
        if not (in_lo.any() or in_hi.any()):
            continue
        s = levels[j]
        if s == 0:
            blurred = img
        else:
            fy = _gaussian_1d_spectrum(s, hp, real=False)
            fx = _gaussian_1d_spectrum(s, wp, real=True)
            blurred = sfft.irfft2(spec * (fy[:, None, None] * fx[None, :, None]), s=(hp, wp), axes=(0, 1))
            blurred = blurred[pad:pad + h, pad:pad + w]
        weight = np.where(in_lo, w_lo, 0.0) + np.where(in_hi, 1.0 - w_lo, 0.0)
        out += weight[:, :, None] * blurred
    return np.maximum(out, 0.0)


def apply_defocus(img, depth, p: DefocusParams) -> np.ndarray:
    img = check_linear(img)
    depth = check_depth(depth, img.shape[:2])
    return gaussian_gather(img, defocus_sigma_map(depth, p))


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------

def _poly(theta, ks):
    t2 = theta * theta
    return theta * (1.0 + t2 * (ks[0] + t2 * (ks[1] + t2 * (ks[2] + t2 * ks[3]))))


def _poly_deriv(theta, ks):
    t2 = theta * theta
    return 1.0 + t2 * (3 * ks[0] + t2 * (5 * ks[1] + t2 * (7 * ks[2] + t2 * 9 * ks[3])))


def distort_angle(theta: float, p: DistortionParams) -> float:
    """``theta * (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8)``."""
    if not 0.0 <= theta <= p.max_theta:
        raise DomainError(f"theta={theta} outside [0, {p.max_theta}]")
    return float(_poly(float(theta), p.ks))


def undistort_angle(theta_d: float, p: DistortionParams, tol: float = 1e-10, max_iter: int = 30) -> float:
    """Invert :func:`distort_angle` by Newton iteration started at ``theta_d``."""
    if theta_d < 0:
        raise DomainError("theta_d must be non-negative")
    if theta_d == 0:
        return 0.0
    theta = float(theta_d)
    for _ in range(max_iter):
        slope = _poly_deriv(theta, p.ks)
        if slope <= 0:
            raise SolverError(f"distortion polynomial is not monotone near theta={theta:.6f}")
        step = (_poly(theta, p.ks) - theta_d) / slope
        theta -= step
        if theta < 0 or theta > p.max_theta:
            raise SolverError(f"theta_d={theta_d} has no preimage in [0, {p.max_theta}]")
        if abs(step) < tol:
            return theta
    raise SolverError(f"undistort did not converge for theta_d={theta_d}")


def monotone_limit(p: DistortionParams) -> float:
    """Largest theta in [0, max_theta] up to which the polynomial is increasing."""
    grid = np.linspace(0.0, p.max_theta, 20001)
    bad = np.flatnonzero(_poly_deriv(grid, p.ks) <= 0)
    if bad.size == 0:
        return p.max_theta
    lo, hi = grid[bad[0] - 1], grid[bad[0]]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _poly_deriv(mid, p.ks) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def _undistort_array(theta_d: np.ndarray, p: DistortionParams):
    """Vectorized inverse on the monotone branch; returns (theta, valid)."""
    limit = monotone_limit(p)
    td_max = _poly(limit, p.ks)
    valid = theta_d <= td_max
    theta = np.where(valid, theta_d, 0.0)
    target = np.where(valid, theta_d, 0.0)
    for _ in range(30):
        step = (_poly(theta, p.ks) - target) / _poly_deriv(theta, p.ks)
        theta = np.clip(theta - step, 0.0, limit)
        if np.max(np.abs(step), initial=0.0) < 1e-10:
            break
    return theta, valid


def fisheye_focal(width: int, height: int, view: CameraView, p: DistortionParams,
                  framing: str = "fill") -> float:
    """Equidistant focal length of the fisheye output.

    ``"fill"`` maps the pinhole's horizontal half field of view onto the output's
    horizontal half width, so content fills the frame and only the corners go
    dark. ``"max_theta"`` maps ``max_theta`` onto the farthest image corner.
    """
    if framing == "max_theta":
        corners = [(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)]
        half_diag = max(math.hypot(u - view.cx, v - view.cy) for u, v in corners)
        return half_diag / p.max_theta
    if framing != "fill":
        raise DomainError(f"unknown framing {framing!r}")
    half_w = max(view.cx, width - 1 - view.cx)
    theta_edge = min(math.atan(half_w / view.fx), monotone_limit(p))
    return half_w / float(_poly(theta_edge, p.ks))


def distortion_remap(width: int, height: int, view: CameraView, p: DistortionParams,
                     focal: float | None = None, framing: str = "fill"):
    """Source coordinates in the pinhole image for every fisheye output pixel.

    Returns ``(u_src, v_src, valid)``; invalid pixels see no pinhole ray.
    """
    f_eq = focal if focal is not None else fisheye_focal(width, height, view, p, framing)
    jj, ii = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    dx = jj - view.cx
    dy = ii - view.cy
    r = np.hypot(dx, dy)
    theta, valid = _undistort_array(r / f_eq, p)
    valid &= theta < math.pi / 2 - 1e-9
    rp = np.tan(np.where(valid, theta, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_phi = np.where(r > 0, dx / r, 0.0)
        sin_phi = np.where(r > 0, dy / r, 0.0)
    u_src = view.cx + view.fx * rp * cos_phi
    v_src = view.cy + view.fy * rp * sin_phi
    valid &= (u_src >= 0) & (u_src <= width - 1) & (v_src >= 0) & (v_src <= height - 1)
    return u_src, v_src, valid


def apply_distortion(img, view: CameraView, p: DistortionParams, focal: float | None = None,
                     framing: str = "fill") -> np.ndarray:
    """Resample a pinhole image into the distorted fisheye (principal point fixed).

    Output pixels whose ray falls outside the pinhole frustum, or beyond the
    polynomial's increasing branch, are black.
    """
    img = check_linear(img)
    h, w, _ = img.shape
    u, v, valid = distortion_remap(w, h, view, p, focal, framing)
    out = np.zeros_like(img)
    coords = np.stack([v[valid], u[valid]])
    for c in range(3):
        out[..., c][valid] = ndimage.map_coordinates(img[..., c], coords, order=1, mode="nearest")
    return np.maximum(out, 0.0)


def distort_depth(depth, view: CameraView, p: DistortionParams, focal: float | None = None,
                  framing: str = "fill") -> np.ndarray:
    """Nearest-neighbour remap of a depth map so it stays aligned with the fisheye image."""
    depth = check_depth(depth)
    h, w = depth.shape
    u, v, valid = distortion_remap(w, h, view, p, focal, framing)
    out = np.zeros_like(depth)
    out[valid] = depth[np.rint(v[valid]).astype(np.int64), np.rint(u[valid]).astype(np.int64)]
    return out


# ---------------------------------------------------------------------------
# motion blur
# ---------------------------------------------------------------------------

def motion_end_pose(pose: CameraView, p: MotionBlurParams) -> CameraView:
    """Displace the camera by ``trans`` along a seeded camera-frame direction and
    rotate it by ``rot`` about a seeded camera-frame axis."""
    rng = Rng(p.direction_seed, "motion_blur")
    direction = rng.child("direction").unit_vector()
    axis = rng.child("axis").unit_vector()
    R = pose.R
    center = pose.center + p.trans * (R.T @ direction)
    R_delta = quat_to_matrix(quat_from_axis_angle(axis, p.rot))
    return pose.with_center(matrix_to_quat(R_delta.T @ R), center)


class _CompensatedMean:
    """Neumaier summation so the frame sum is insensitive to accumulation order."""

    def __init__(self):
        self.total = None
        self.comp = None
        self.count = 0

    def add(self, x: np.ndarray):
        if self.total is None:
            self.total = np.array(x, dtype=np.float64)
            self.comp = np.zeros_like(self.total)
        else:
            t = self.total + x
            big = np.abs(self.total) >= np.abs(x)
            self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
            self.total = t
        self.count += 1

    def mean(self) -> np.ndarray:
        return (self.total + self.comp) / self.count


def apply_motion_blur(renderer: Renderer, pose: CameraView, p: MotionBlurParams) -> np.ndarray:
    """Mean of ``sub_steps`` linear renders along the start -> end trajectory."""
    acc = _CompensatedMean()
    for view in trajectory_poses(pose, motion_end_pose(pose, p), p.sub_steps):
        acc.add(renderer(view).color)
    return acc.mean()


def warp_frame(img: np.ndarray, depth: np.ndarray, src: CameraView, dst: CameraView) -> np.ndarray:
    """Forward-reproject one frame into another pose: z-buffered splat to the
    nearest pixel, holes filled from the nearest covered pixel."""
    h, w, _ = img.shape
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d = depth.ravel()
    pc = np.stack([(jj.ravel() - src.cx) / src.fx * d, (ii.ravel() - src.cy) / src.fy * d, d], axis=1)
    pd = dst.world_to_camera(src.camera_to_world(pc))
    z = pd[:, 2]
    front = z > 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.rint(dst.fx * pd[:, 0] / z + dst.cx)
        v = np.rint(dst.fy * pd[:, 1] / z + dst.cy)
    ok = front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    src_idx = np.flatnonzero(ok)
    tgt = v[ok].astype(np.int64) * w + u[ok].astype(np.int64)
    order = np.lexsort((z[ok], tgt))
    tgt_sorted = tgt[order]
    first = np.ones(tgt_sorted.size, dtype=bool)
    first[1:] = tgt_sorted[1:] != tgt_sorted[:-1]
    winners = src_idx[order[first]]
    flat = img.reshape(-1, 3)
    out = np.zeros_like(flat)
    covered = np.zeros(h * w, dtype=bool)
    out[tgt_sorted[first]] = flat[winners]
    covered[tgt_sorted[first]] = True
    if not covered.any():
        return img.copy()
    covered = covered.reshape(h, w)
    out = out.reshape(h, w, 3)
    if not covered.all():
        _, (ri, rj) = ndimage.distance_transform_edt(~covered, return_indices=True)
        out = out[ri, rj]
    return out


def apply_motion_blur_warp(img, depth, view: CameraView, p: MotionBlurParams) -> np.ndarray:
    """Renderer-free fallback: average depth-warped copies of a single frame.

    Approximate (no disocclusion content); invalid depth is treated as lying at
    the farthest valid depth.
    """
    img = check_linear(img)
    depth = check_depth(depth, img.shape[:2])
    valid = depth > 0
    far = float(depth[valid].max()) if valid.any() else 10.0
    filled = np.where(valid, depth, far)
    acc = _CompensatedMean()
    for pose in trajectory_poses(view, motion_end_pose(view, p), p.sub_steps):
        acc.add(warp_frame(img, filled, view, pose))
    return acc.mean()
