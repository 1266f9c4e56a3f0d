"""Deterministic pinhole raytracer over planes, axis-aligned boxes and spheres.

It stands in for a reconstructed scene: one primary ray per pixel, nearest hit,
shading ``albedo * (ambient + lambert) + emission`` from one fixed directional
light, no shadows. Depth is the camera-frame z of the hit (0 on background).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, FormatError
from .imaging import CameraView, Rng, interpolate_pose, look_at

LIGHT_DIR = np.array([0.35, -0.45, 0.82]) / np.linalg.norm([0.35, -0.45, 0.82])
LIGHT_INTENSITY = 0.8
_EPS = 1e-9

TEXTURES = ("checker", "gradient", "solid")


@dataclass(frozen=True)
class Primitive:
    kind: str  # "plane" | "box" | "sphere"
    center: tuple  # plane: a point on the plane
    size: tuple = (1.0, 1.0, 1.0)  # box extents (x, y, z)
    radius: float = 0.5
    normal: tuple = (0.0, 0.0, 1.0)
    texture: str = "checker"
    texture_seed: int = 0
    texture_scale: float = 0.5
    emission: float = 0.0
    label: str | None = None

    def colors(self) -> np.ndarray:
        rng = Rng(self.texture_seed, "texture")
        return rng.uniform(0.15, 0.9, size=(2, 3))

    def extents(self) -> np.ndarray:
        if self.kind == "box":
            return np.asarray(self.size, dtype=np.float64)
        if self.kind == "sphere":
            return np.full(3, 2.0 * self.radius)
        raise DomainError("planes have no extents")

    def to_dict(self) -> dict:
        d = {"type": self.kind, "texture": self.texture, "texture_seed": self.texture_seed,
             "texture_scale": self.texture_scale, "emission": self.emission}
        if self.kind == "plane":
            d.update(point=list(self.center), normal=list(self.normal))
        elif self.kind == "box":
            d.update(center=list(self.center), size=list(self.size))
        else:
            d.update(center=list(self.center), radius=self.radius)
        if self.label is not None:
            d["label"] = self.label
        return d


@dataclass(frozen=True)
class Scene:
    primitives: tuple
    ambient: float = 0.25
    background: tuple = (0.02, 0.02, 0.03)
    cameras: dict = field(default_factory=dict)
    width: int = 320
    height: int = 240

    def __post_init__(self):
        if not self.primitives:
            raise DomainError("a scene needs at least one primitive")
        for p in self.primitives:
            vals = list(p.center) + list(p.size) + [p.radius] + list(p.normal)
            if not all(math.isfinite(v) for v in vals):
                raise DomainError("primitive placement must be finite")

    def camera(self, name: str = "default") -> CameraView:
        try:
            return self.cameras[name]
        except KeyError:
            raise DomainError(f"scene has no camera preset {name!r}") from None

    def labelled(self) -> list[tuple[int, Primitive]]:
        return [(i, p) for i, p in enumerate(self.primitives) if p.label is not None]


@dataclass
class RenderOutput:
    color: np.ndarray  # (H, W, 3) linear
    depth: np.ndarray  # (H, W) meters, 0 on background
    ids: np.ndarray | None = None  # (H, W) primitive index, -1 on background
    view: CameraView | None = None


@dataclass(frozen=True)
class RenderRequest:
    view: CameraView
    width: int
    height: int

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise DomainError("render size must be at least 8x8")


Renderer = Callable[[CameraView], RenderOutput]


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------

def _primitive_from_dict(d: dict) -> Primitive:
    kind = d.get("type")
    common = dict(texture=d.get("texture", "checker"), texture_seed=int(d.get("texture_seed", 0)),
                  texture_scale=float(d.get("texture_scale", 0.5)),
                  emission=float(d.get("emission", 0.0)), label=d.get("label"))
    if common["texture"] not in TEXTURES:
        raise FormatError(f"unknown texture {common['texture']!r}")
    if kind == "plane":
        n = np.asarray(d["normal"], dtype=np.float64)
        return Primitive("plane", tuple(map(float, d["point"])), normal=tuple(n / np.linalg.norm(n)), **common)
    if kind == "box":
        size = tuple(map(float, d["size"]))
        if len(size) != 3 or min(size) <= 0:
            raise FormatError("box size must be three positive extents")
        return Primitive("box", tuple(map(float, d["center"])), size=size, **common)
    if kind == "sphere":
        r = float(d["radius"])
        if r <= 0:
            raise FormatError("sphere radius must be positive")
        return Primitive("sphere", tuple(map(float, d["center"])), radius=r, **common)
    raise FormatError(f"unknown primitive type {kind!r}")


def scene_from_dict(d: dict) -> Scene:
    try:
        prims = tuple(_primitive_from_dict(p) for p in d["primitives"])
        width = int(d.get("width", 320))
        height = int(d.get("height", 240))
        cams = {name: CameraView.from_dict(c) for name, c in d.get("cameras", {}).items()}
        return Scene(prims, ambient=float(d.get("ambient", 0.25)),
                     background=tuple(map(float, d.get("background", (0.02, 0.02, 0.03)))),
                     cameras=cams, width=width, height=height)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed scene: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    return {"width": scene.width, "height": scene.height, "ambient": scene.ambient,
            "background": list(scene.background),
            "primitives": [p.to_dict() for p in scene.primitives],
            "cameras": {k: v.to_dict() for k, v in scene.cameras.items()}}


def load_scene(path) -> Scene:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read scene {path}: {exc}") from exc
    return scene_from_dict(d)


def demo_scene(width: int = 320, height: int = 240) -> Scene:
    """Small furnished room. The default camera's center ray hits the back wall
    (plane y = 5) head-on from the origin, so its center depth is 5.0 m."""
    prims = (
        Primitive("plane", (0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), texture="checker", texture_seed=11),
        Primitive("plane", (0.0, 5.0, 0.0), normal=(0.0, -1.0, 0.0), texture="gradient", texture_seed=12,
                  texture_scale=3.0),
        Primitive("plane", (-3.0, 0.0, 0.0), normal=(1.0, 0.0, 0.0), texture="checker", texture_seed=13,
                  texture_scale=0.8),
        Primitive("box", (-1.2, 3.0, 0.45), size=(0.5, 0.5, 0.9), texture="checker", texture_seed=21,
                  texture_scale=0.15, label="chair"),
        Primitive("box", (1.3, 2.5, 0.45), size=(0.5, 0.55, 0.9), texture="checker", texture_seed=22,
                  texture_scale=0.15, label="chair"),
        Primitive("box", (0.2, 3.6, 0.375), size=(1.4, 0.8, 0.75), texture="gradient", texture_seed=23,
                  texture_scale=1.0, label="table"),
        Primitive("box", (2.2, 4.4, 0.9), size=(0.8, 0.5, 1.8), texture="solid", texture_seed=24,
                  label="cabinet"),
        Primitive("sphere", (-0.6, 2.0, 0.2), radius=0.2, texture="solid", texture_seed=25, label="ball"),
        Primitive("box", (-1.8, 4.6, 2.2), size=(0.6, 0.1, 0.4), texture="solid", texture_seed=26,
                  emission=1.5, label="lamp"),
    )
    fx = (width / 2.0) / math.tan(math.radians(30.0))
    intr = dict(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)
    cams = {
        "default": look_at((0.0, 0.0, 1.2), (0.0, 5.0, 1.2), **intr),
        "left": look_at((-1.5, 0.3, 1.4), (0.2, 3.5, 0.6), **intr),
        "right": look_at((1.6, 0.5, 1.3), (-0.2, 3.4, 0.6), **intr),
        "high": look_at((0.3, -0.5, 2.4), (0.1, 3.2, 0.3), **intr),
    }
    return Scene(prims, cameras=cams, width=width, height=height)


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

_RAY_CACHE: dict = {}


def _camera_rays(fx, fy, cx, cy, width, height) -> np.ndarray:
    key = (fx, fy, cx, cy, width, height)
    dc = _RAY_CACHE.get(key)
    if dc is None:
        jj, ii = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
        dc = np.stack([(jj.ravel() - cx) / fx, (ii.ravel() - cy) / fy, np.ones(width * height)], axis=0)
        dc.setflags(write=False)
        if len(_RAY_CACHE) > 8:
            _RAY_CACHE.clear()
        _RAY_CACHE[key] = dc
    return dc


def _pixel_rays(view: CameraView, width: int, height: int):
    """World-frame ray directions, scaled so each has camera-frame z = 1."""
    dc = _camera_rays(view.fx, view.fy, view.cx, view.cy, width, height)
    return view.center, view.R.T @ dc


def _screen_rect(view: CameraView, corners: np.ndarray, width: int, height: int):
    """Pixel bounding rect of a convex object's corners, or None if unbounded."""
    pc = view.world_to_camera(corners)
    if np.any(pc[:, 2] <= 1e-6):
        return (0, width, 0, height)
    u = view.fx * pc[:, 0] / pc[:, 2] + view.cx
    v = view.fy * pc[:, 1] / pc[:, 2] + view.cy
    j0 = max(int(math.floor(u.min())) - 1, 0)
    j1 = min(int(math.ceil(u.max())) + 2, width)
    i0 = max(int(math.floor(v.min())) - 1, 0)
    i1 = min(int(math.ceil(v.max())) + 2, height)
    if j0 >= j1 or i0 >= i1:
        return None
    return (j0, j1, i0, i1)


def _corners(p: Primitive) -> np.ndarray:
    half = p.extents() / 2.0
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
    return np.asarray(p.center) + signs * half


def _intersect(p: Primitive, origin: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Ray parameter of the nearest hit in front of the origin; inf on miss."""
    n = d.shape[1]
    if p.kind == "plane":
        nrm = np.asarray(p.normal)
        denom = nrm @ d
        num = float(nrm @ (np.asarray(p.center) - origin))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        return np.where((np.abs(denom) > 1e-12) & (t > _EPS), t, np.inf)
    if p.kind == "box":
        c = np.asarray(p.center)
        half = np.asarray(p.size) / 2.0
        tmin = np.full(n, -np.inf)
        tmax = np.full(n, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            for a in range(3):
                inv = 1.0 / d[a]
                t1 = (c[a] - half[a] - origin[a]) * inv
                t2 = (c[a] + half[a] - origin[a]) * inv
                tmin = np.fmax(tmin, np.fmin(t1, t2))
                tmax = np.fmin(tmax, np.fmax(t1, t2))
        hit = (tmax >= tmin) & (tmax > _EPS)
        t = np.where(tmin > _EPS, tmin, tmax)
        return np.where(hit, t, np.inf)
    # sphere
    oc = origin - np.asarray(p.center)
    a = np.einsum("ij,ij->j", d, d)
    b = 2.0 * (oc @ d)
    c = float(oc @ oc) - p.radius ** 2
    disc = b * b - 4 * a * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(t0 > _EPS, t0, t1)
    return np.where((disc >= 0) & (t > _EPS), t, np.inf)


def _normals(p: Primitive, pts: np.ndarray, d: np.ndarray) -> np.ndarray:
    if p.kind == "plane":
        nrm = np.broadcast_to(np.asarray(p.normal)[:, None], pts.shape).copy()
    elif p.kind == "box":
        rel = (pts - np.asarray(p.center)[:, None]) / (np.asarray(p.size)[:, None] / 2.0)
        axis = np.argmax(np.abs(rel), axis=0)
        nrm = np.zeros_like(pts)
        cols = np.arange(pts.shape[1])
        nrm[axis, cols] = np.sign(rel[axis, cols])
    else:
        nrm = (pts - np.asarray(p.center)[:, None]) / p.radius
    # two-sided: face the viewer
    flip = np.einsum("ij,ij->j", nrm, d) > 0
    nrm[:, flip] *= -1.0
    return nrm


def _albedo(p: Primitive, pts: np.ndarray) -> np.ndarray:
    c0, c1 = p.colors()
    if p.texture == "solid":
        return np.broadcast_to(c0[:, None], pts.shape)
    if p.texture == "checker":
        cells = np.floor(pts / p.texture_scale + 1e-9).astype(np.int64).sum(axis=0)
        odd = (cells % 2).astype(bool)
        return np.where(odd[None, :], c1[:, None], c0[:, None])
    # gradient along the dominant in-plane world axis, periodic with texture_scale
    s = (pts[0] + 0.7 * pts[1] + 0.3 * pts[2]) / p.texture_scale
    w = 0.5 - 0.5 * np.cos(2 * np.pi * s)
    return c0[:, None] * (1 - w) + c1[:, None] * w


def render(scene: Scene, req: RenderRequest) -> RenderOutput:
    """Render color, depth and primitive ids for one view. Pure and deterministic."""
    view, width, height = req.view, req.width, req.height
    origin, dw = _pixel_rays(view, width, height)
    npix = width * height
    best_t = np.full(npix, np.inf)
    best_id = np.full(npix, -1, dtype=np.int64)
    pix_index = np.arange(npix).reshape(height, width)

    for k, prim in enumerate(scene.primitives):
        if prim.kind == "plane":
            idx = None
        else:
            rect = _screen_rect(view, _corners(prim), width, height)
            if rect is None:
                continue
            j0, j1, i0, i1 = rect
            idx = None if (j1 - j0) * (i1 - i0) == npix else pix_index[i0:i1, j0:j1].ravel()
        if idx is None:
            t = _intersect(prim, origin, dw)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_id[closer] = k
        else:
            t = _intersect(prim, origin, dw[:, idx])
            closer = t < best_t[idx]
            best_t[idx[closer]] = t[closer]
            best_id[idx[closer]] = k

    color = np.empty((npix, 3))
    color[:] = np.asarray(scene.background, dtype=np.float64)
    hit = best_id >= 0
    for k, prim in enumerate(scene.primitives):
        sel = np.flatnonzero(best_id == k)
        if sel.size == 0:
            continue
        d = dw[:, sel]
        pts = origin[:, None] + d * best_t[sel]
        nrm = _normals(prim, pts, d)
        lambert = np.maximum(0.0, LIGHT_DIR @ nrm)
        color[sel] = (_albedo(prim, pts) * (scene.ambient + LIGHT_INTENSITY * lambert) + prim.emission).T

    depth = np.where(hit, best_t, 0.0)
    return RenderOutput(
        color=color.reshape(height, width, 3),
        depth=depth.reshape(height, width),
        ids=best_id.reshape(height, width).astype(np.int32),
        view=view,
    )


class SceneRenderer:
    """``render(pose) -> RenderOutput`` capability over a fixed scene and size."""

    def __init__(self, scene: Scene, width: int | None = None, height: int | None = None):
        self.scene = scene
        self.width = width or scene.width
        self.height = height or scene.height

    def __call__(self, view: CameraView) -> RenderOutput:
        return render(self.scene, RenderRequest(view, self.width, self.height))


def trajectory_poses(pose_start: CameraView, pose_end: CameraView, n: int) -> list[CameraView]:
    """``n`` poses at ``t_i = i / (n - 1)`` (just the start pose when ``n == 1``)."""
    if n < 1:
        raise DomainError("trajectory needs at least one sub-step")
    if n == 1:
        return [pose_start]
    return [interpolate_pose(pose_start, pose_end, i / (n - 1)) for i in range(n)]


def render_along_trajectory(scene: Scene, pose_start: CameraView, pose_end: CameraView, n: int,
                            width: int | None = None, height: int | None = None) -> list[RenderOutput]:
    renderer = SceneRenderer(scene, width, height)
    return [renderer(v) for v in trajectory_poses(pose_start, pose_end, n)]
