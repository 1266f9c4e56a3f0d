"""Image buffers, transfer functions, camera/pose math and seeded randomness.

Images are plain ``numpy`` arrays:

* linear image: ``(H, W, 3)`` float64, finite, >= 0 (linear radiance)
* sRGB image: ``(H, W, 3)`` float64 in ``[0, 1]``
* depth map: ``(H, W)`` float64 meters, ``0`` marks an invalid pixel

Camera convention (used everywhere): OpenCV axes (x right, y down, z forward),
world->camera extrinsics ``X_cam = R @ X_world + t``, quaternions stored
scalar-last ``(x, y, z, w)``. Pixel ``(row i, col j)`` has its center at image
coordinates ``(u, v) = (j, i)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_SRGB_BREAK = 0.04045
_LINEAR_BREAK = 0.0031308


# ---------------------------------------------------------------------------
# buffer validation
# ---------------------------------------------------------------------------

def check_linear(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DomainError(f"{name} must be HxWx3, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or np.any(img < 0):
        raise DomainError(f"{name} must be finite and non-negative")
    return img


def check_srgb(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DomainError(f"{name} must be HxWx3, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0 or img.max(initial=0.0) > 1:
        raise DomainError(f"{name} samples must lie in [0, 1]")
    return img


def check_depth(depth: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise DomainError(f"depth must be HxW, got shape {depth.shape}")
    if shape is not None and depth.shape != tuple(shape):
        raise DomainError(f"depth shape {depth.shape} does not match image {tuple(shape)}")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise DomainError("depth must be finite and non-negative")
    return depth


# ---------------------------------------------------------------------------
# transfer functions
# ---------------------------------------------------------------------------

def srgb_to_linear(img) -> np.ndarray:
    """Piecewise sRGB decoding (IEC 61966-2-1). Inputs must lie in [0, 1]."""
    x = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(x)) or x.min(initial=0.0) < 0 or x.max(initial=0.0) > 1:
        raise DomainError("sRGB samples must lie in [0, 1]")
    return np.where(x <= _SRGB_BREAK, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(img) -> np.ndarray:
    """Piecewise sRGB encoding; values above 1 (and below 0) are clipped first."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= _LINEAR_BREAK, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] raster to 8 bits (round half to even)."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def content_hash(img: np.ndarray) -> str:
    """sha256 over the 8-bit quantization of an sRGB raster plus its shape."""
    q = to_uint8(img)
    h = hashlib.sha256()
    h.update(repr(q.shape).encode())
    h.update(q.tobytes())
    return h.hexdigest()


def array_hash(arr: np.ndarray) -> str:
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(f"{arr.dtype.str}{arr.shape}".encode())
    h.update(arr.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# quaternions (scalar-last)
# ---------------------------------------------------------------------------

IDENTITY_QUAT = (0.0, 0.0, 0.0, 1.0)


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0 or not np.isfinite(n):
        raise DomainError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise DomainError("rotation axis must be non-zero")
    axis = axis / n
    s = math.sin(angle / 2.0)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, math.cos(angle / 2.0)])


def quat_to_matrix(q) -> np.ndarray:
    x, y, z, w = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method), w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s]
    q = quat_normalize(q)
    return -q if q[3] < 0 else q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (rotation b first, then a)."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_angle(q0, q1) -> float:
    """Rotation angle (radians, in [0, pi]) between two unit quaternions."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    if np.dot(q0, q1) < 0:
        q1 = -q1
    # |q0 - q1| : |q0 + q1| = tan(angle / 4)
    return 4.0 * math.atan2(np.linalg.norm(q0 - q1), np.linalg.norm(q0 + q1))


def _require_unit(q, name):
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,) or not np.all(np.isfinite(q)) or abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise DomainError(f"{name} must be a unit quaternion")
    return q


def slerp(q0, q1, t: float) -> np.ndarray:
    """Spherical linear interpolation along the shorter geodesic.

    ``q1`` is sign-flipped when ``dot(q0, q1) < 0`` so the path never takes the
    long way round. The result is renormalized to unit length.
    """
    q0 = _require_unit(q0, "q0")
    q1 = _require_unit(q1, "q1")
    if not 0.0 <= t <= 1.0:
        raise DomainError("slerp fraction must lie in [0, 1]")
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if np.array_equal(q0, q1):
        # keep a constant rotation bit-exact; renormalizing would jitter the last ulp
        return q0.copy()
    # arc between the quaternions (half the rotation angle), stable for tiny arcs
    omega = 2.0 * math.atan2(np.linalg.norm(q0 - q1), np.linalg.norm(q0 + q1))
    if omega < 1e-12:
        out = q0 * (1.0 - t) + q1 * t
    else:
        so = math.sin(omega)
        out = (math.sin((1.0 - t) * omega) / so) * q0 + (math.sin(t * omega) / so) * q1
    return out / np.linalg.norm(out)


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraView:
    """Pinhole intrinsics plus world->camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: tuple = IDENTITY_QUAT
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        q = np.asarray(self.rotation, dtype=np.float64)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise DomainError("rotation must be a unit quaternion (x, y, z, w)")
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise DomainError("translation must be a finite 3-vector")
        object.__setattr__(self, "rotation", tuple(float(v) for v in q / np.linalg.norm(q)))
        object.__setattr__(self, "translation", tuple(float(v) for v in t))

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def with_pose(self, rotation, translation) -> "CameraView":
        return CameraView(self.fx, self.fy, self.cx, self.cy, tuple(rotation), tuple(translation))

    def with_center(self, rotation, center) -> "CameraView":
        """Same intrinsics, pose given as (world->camera rotation, camera center)."""
        R = quat_to_matrix(rotation)
        return self.with_pose(rotation, -R @ np.asarray(center, dtype=np.float64))

    def world_to_camera(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.R.T + self.t

    def camera_to_world(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.t) @ self.R

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": list(self.rotation), "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        if "eye" in d:
            return look_at(d["eye"], d["target"], d.get("up", (0, 0, 1)),
                           fx=d["fx"], fy=d.get("fy", d["fx"]), cx=d["cx"], cy=d["cy"])
        return cls(d["fx"], d["fy"], d["cx"], d["cy"],
                   tuple(d.get("rotation", IDENTITY_QUAT)), tuple(d.get("translation", (0, 0, 0))))


def default_intrinsics(width: int, height: int, hfov_deg: float = 60.0) -> dict:
    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    return {"fx": fx, "fy": fx, "cx": (width - 1) / 2.0, "cy": (height - 1) / 2.0}


def look_at(eye, target, up=(0.0, 0.0, 1.0), *, fx, fy=None, cx, cy) -> CameraView:
    """Camera at ``eye`` looking at ``target`` with ``up`` as the world-up hint."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        raise DomainError("viewing direction is parallel to the up vector")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    q = matrix_to_quat(R)
    return CameraView(fx, fy if fy is not None else fx, cx, cy, tuple(q), tuple(-R @ eye))


def interpolate_pose(a: CameraView, b: CameraView, t: float) -> CameraView:
    """Slerp the rotation, move the camera center linearly. Intrinsics from ``a``."""
    q = slerp(a.rotation, b.rotation, t)
    c = a.center + t * (b.center - a.center)  # exact when the centers coincide
    return a.with_center(q, c)


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

@dataclass
class Rng:
    """Counter-based (Philox) generator keyed by ``(seed, label)``.

    Equal keys give bit-identical streams; distinct labels give independent
    streams, so draws never depend on the order stages are evaluated in.
    """

    seed: int
    label: str = ""
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        digest = hashlib.sha256(f"{self.seed}\x1f{self.label}".encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def child(self, label: str) -> "Rng":
        return Rng(self.seed, f"{self.label}/{label}" if self.label else str(label))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def unit_vector(self) -> np.ndarray:
        v = self.generator.standard_normal(3)
        while np.linalg.norm(v) < 1e-9:
            v = self.generator.standard_normal(3)
        return v / np.linalg.norm(v)


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit sub-seed for a labelled sub-stream."""
    digest = hashlib.sha256(f"{int(seed)}\x1f{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1

