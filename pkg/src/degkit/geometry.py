"""Multi-view geometry behind the spatial questions.

Covisibility between calibrated depth views, direction and rotation labels
with their ambiguity filters, and the metric answers computed from camera
poses and 3D boxes. Camera frames follow the x-right, y-down, z-forward
convention; the world is z-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DomainError
from .imaging import CameraView, Rng, quat_angle

SECONDARY_RATIO = 0.5774  # tan(30 deg): secondary direction component threshold
RATIO_BUFFER = 0.1
MIN_ROTATION_DEG = 5.0
GIMBAL_LIMIT_DEG = 85.0
BOUNDARY_MARGIN_DEG = 3.0
SNAP_BAND = (0.85, 1.15)
FACTOR_RANGE = (0.5, 1.5)
SIZE_TIE = 1e-2
TRIPLET_MIN_DIST = 0.15
COLLINEAR_DOT = 0.95

SECTOR_LABELS = ("front", "front-right", "right", "back-right", "back", "back-left", "left", "front-left")
CARDINAL_LABELS = ("north", "northeast", "east", "southeast", "south", "southwest", "west", "northwest")
WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Instance3D:
    id: int
    label: str
    center: tuple
    extents: tuple  # (w, l, h) in meters, axis aligned
    visible_views: tuple = ()

    def __post_init__(self):
        if len(self.extents) != 3 or any(not e > 0 for e in self.extents):
            raise DomainError("instance extents must be three positive numbers")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - 0.5 * np.asarray(self.extents)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + 0.5 * np.asarray(self.extents)

    def to_dict(self) -> dict:
        return {"id": self.id, "label": self.label, "center": list(map(float, self.center)),
                "extents": list(map(float, self.extents)), "visible_views": list(self.visible_views)}

    @classmethod
    def from_dict(cls, d: dict) -> "Instance3D":
        return cls(int(d["id"]), str(d["label"]), tuple(d["center"]), tuple(d["extents"]),
                   tuple(d.get("visible_views", ())))


# ---------------------------------------------------------------------------
# covisibility
# ---------------------------------------------------------------------------

def lift_depth(view: CameraView, depth: np.ndarray):
    """World points of every valid depth pixel, plus the flat indices they came from."""
    h, w = depth.shape
    idx = np.flatnonzero(depth.ravel() > 0)
    i, j = np.divmod(idx, w)
    d = depth.ravel()[idx]
    pc = np.stack([(j - view.cx) / view.fx * d, (i - view.cy) / view.fy * d, d], axis=1)
    return view.camera_to_world(pc), idx


def covisibility(view_a: CameraView, depth_a: np.ndarray, view_b: CameraView, depth_b: np.ndarray,
                 depth_tol: float = 0.03) -> float:
    """Fraction of a's valid depth pixels that reproject consistently into b.

    A pixel counts when its 3D point lies in front of b, rounds to a pixel
    inside b's frame, and b's depth there agrees with the projected depth to
    within ``depth_tol`` relative to b's depth.
    """
    pts, _ = lift_depth(view_a, depth_a)
    if pts.shape[0] == 0:
        raise DomainError("view a has no valid depth")
    hb, wb = depth_b.shape
    pc = view_b.world_to_camera(pts)
    z = pc[:, 2]
    front = z > 0
    u = np.full(z.shape, -1.0)
    v = np.full(z.shape, -1.0)
    u[front] = np.rint(view_b.fx * pc[front, 0] / z[front] + view_b.cx)
    v[front] = np.rint(view_b.fy * pc[front, 1] / z[front] + view_b.cy)
    inside = front & (u >= 0) & (u <= wb - 1) & (v >= 0) & (v <= hb - 1)
    db = np.zeros(z.shape)
    db[inside] = depth_b[v[inside].astype(np.int64), u[inside].astype(np.int64)]
    ok = inside & (db > 0)
    ok[ok] = np.abs(z[ok] - db[ok]) <= depth_tol * db[ok]
    return float(np.count_nonzero(ok)) / pts.shape[0]


# ---------------------------------------------------------------------------
# direction labels
# ---------------------------------------------------------------------------

_AXES = (("right", "left"), ("down", "up"), ("forward", "backward"))


def dominant_translation_direction(t) -> str:
    """Direction label of a camera-frame displacement, e.g. ``"forward"`` or ``"forward-right"``.

    The secondary axis is appended only when its magnitude is at least
    0.5774 times the dominant one.
    """
    t = np.asarray(t, dtype=np.float64)
    mags = np.abs(t)
    if not mags.max() > 0:
        raise DomainError("zero displacement has no direction")
    order = np.argsort(-mags, kind="stable")
    first, second = int(order[0]), int(order[1])

    def name(axis):
        pos, neg = _AXES[axis]
        return pos if t[axis] > 0 else neg

    label = name(first)
    if mags[second] > 0 and mags[second] >= SECONDARY_RATIO * mags[first]:
        label += "-" + name(second)
    return label


def translation_direction_usable(t, min_horizontal: float = 0.1) -> tuple[bool, str]:
    """Reject displacements that are mostly vertical or too small horizontally."""
    t = np.asarray(t, dtype=np.float64)
    horizontal = math.hypot(t[0], t[2])
    if horizontal < min_horizontal:
        return False, "horizontal displacement below threshold"
    if abs(t[1]) > horizontal:
        return False, "vertical displacement dominates"
    return True, ""


def _snap(x: float) -> float:
    # collapse float noise so grid values such as 22.5 land exactly on boundaries
    return round(x, 9)


def sector_classify(yaw: float) -> tuple[int, str]:
    """Eight 45 degree sectors, sector 0 (``front``) centred on yaw 0, clockwise."""
    i = int(math.floor(_snap(((yaw + 22.5) % 360.0) / 45.0))) % 8
    return i, SECTOR_LABELS[i]


def forbidden_neighbor(yaw: float) -> int | None:
    """Sector across the nearest boundary when yaw is within 3 degrees of it."""
    r = _snap((yaw - 22.5) % 45.0)  # distance above the boundary below
    sector, _ = sector_classify(yaw)
    if r < BOUNDARY_MARGIN_DEG:
        return (sector - 1) % 8
    if 45.0 - r < BOUNDARY_MARGIN_DEG:
        return (sector + 1) % 8
    return None


def boundary_distance(yaw: float) -> float:
    r = _snap((yaw - 22.5) % 45.0)
    return min(r, 45.0 - r)


def cardinal_label(bearing: float) -> str:
    return CARDINAL_LABELS[sector_classify(bearing)[0]]


def compass_bearing(src, dst) -> float:
    """Clockwise angle from +y (north) to the horizontal direction src -> dst, in [0, 360)."""
    d = np.asarray(dst, dtype=np.float64) - np.asarray(src, dtype=np.float64)
    return math.degrees(math.atan2(d[0], d[1])) % 360.0


def camera_yaw_of(view: CameraView, point) -> float:
    """Horizontal angle of a world point in the camera frame, clockwise from forward."""
    pc = view.world_to_camera(np.asarray(point, dtype=np.float64)[None])[0]
    return math.degrees(math.atan2(pc[0], pc[2])) % 360.0


def proxy_frame_yaw(anchor, facing, target) -> float:
    """Yaw of ``target`` for an observer standing at ``anchor`` facing ``facing`` (world z-up)."""
    f = np.asarray(facing, dtype=np.float64) - np.asarray(anchor, dtype=np.float64)
    f = f[:2]
    n = np.linalg.norm(f)
    if n < 1e-12:
        raise DomainError("anchor and facing object coincide horizontally")
    f /= n
    right = np.array([f[1], -f[0]])
    d = (np.asarray(target, dtype=np.float64) - np.asarray(anchor, dtype=np.float64))[:2]
    return math.degrees(math.atan2(d @ right, d @ f)) % 360.0


def transfer_cardinal(assumed_bearing: float, bearing_ref: float, bearing_query: float) -> float:
    """Bearing of the query once the reference direction is declared to be ``assumed_bearing``."""
    return (assumed_bearing + bearing_query - bearing_ref) % 360.0


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelativeRotation:
    yaw: float  # degrees, positive turns right
    pitch: float  # degrees, positive tilts up
    roll: float  # degrees, positive rolls clockwise
    angle: float  # total rotation angle, degrees
    dominance: str | None  # "single" | "dual" | None when rejected
    accepted: bool
    reason: str = ""

    def components(self) -> dict:
        return {"yaw": self.yaw, "pitch": self.pitch, "roll": self.roll}


def relative_rotation_matrix(a: CameraView, b: CameraView) -> np.ndarray:
    """Rotation taking a's camera axes onto b's, expressed in a's camera frame."""
    return a.R @ b.R.T


def decompose_ypr(m: np.ndarray) -> tuple[float, float, float]:
    """``M = Ry(yaw) Rx(pitch) Rz(roll)`` with camera y pointing down.

    Positive yaw swings the optical axis to the right, positive pitch swings it up.
    """
    pitch = math.asin(float(np.clip(-m[1, 2], -1.0, 1.0)))
    yaw = math.atan2(m[0, 2], m[2, 2])
    roll = math.atan2(m[1, 0], m[1, 1])
    return math.degrees(yaw), math.degrees(pitch), math.degrees(roll)


def compose_ypr(yaw: float, pitch: float, roll: float) -> np.ndarray:
    y, p, r = map(math.radians, (yaw, pitch, roll))
    ry = np.array([[math.cos(y), 0, math.sin(y)], [0, 1, 0], [-math.sin(y), 0, math.cos(y)]])
    rx = np.array([[1, 0, 0], [0, math.cos(p), -math.sin(p)], [0, math.sin(p), math.cos(p)]])
    rz = np.array([[math.cos(r), -math.sin(r), 0], [math.sin(r), math.cos(r), 0], [0, 0, 1]])
    return ry @ rx @ rz


def classify_rotation(yaw: float, pitch: float, roll: float, angle: float) -> RelativeRotation:
    if angle < MIN_ROTATION_DEG:
        return RelativeRotation(yaw, pitch, roll, angle, None, False, "below 5 degrees")
    if abs(pitch) > GIMBAL_LIMIT_DEG:
        return RelativeRotation(yaw, pitch, roll, angle, None, False, "near gimbal lock")
    mags = sorted((abs(yaw), abs(pitch), abs(roll)), reverse=True)
    ratio = mags[1] / mags[0]
    if ratio < SECONDARY_RATIO - RATIO_BUFFER:
        return RelativeRotation(yaw, pitch, roll, angle, "single", True)
    if ratio > SECONDARY_RATIO + RATIO_BUFFER:
        return RelativeRotation(yaw, pitch, roll, angle, "dual", True)
    return RelativeRotation(yaw, pitch, roll, angle, None, False, "component ratio in grey zone")


def relative_rotation(a: CameraView, b: CameraView) -> RelativeRotation:
    yaw, pitch, roll = decompose_ypr(relative_rotation_matrix(a, b))
    angle = math.degrees(quat_angle(a.rotation, b.rotation))
    return classify_rotation(yaw, pitch, roll, angle)


_ROT_WORDS = {"yaw": ("right", "left"), "pitch": ("up", "down"), "roll": ("clockwise", "counterclockwise")}


def rotation_label(rot: RelativeRotation) -> str:
    """``"yaw right"`` or ``"yaw right + pitch up"`` (dominant component first)."""
    comps = rot.components()
    order = sorted(comps, key=lambda k: -abs(comps[k]))
    n = 2 if rot.dominance == "dual" else 1
    parts = []
    for k in order[:n]:
        pos, neg = _ROT_WORDS[k]
        parts.append(f"{k} {pos if comps[k] > 0 else neg}")
    return " + ".join(parts)


# ---------------------------------------------------------------------------
# thresholds, sizes, triplets
# ---------------------------------------------------------------------------

def snap_factor(f: float) -> float:
    """Move factors inside (0.85, 1.15) to the nearer band edge (ties go to 0.85)."""
    lo, hi = SNAP_BAND
    if lo < f < hi:
        # rounded so the float tie at 1.0 really is a tie
        return lo if round(f - lo, 12) <= round(hi - f, 12) else hi
    return f


def threshold_for_translation(distance: float, rng: Rng) -> tuple[float, float, str]:
    """``(threshold, factor, answer)`` for the yes/no translation question."""
    if not distance > 0:
        raise DomainError("distance must be positive")
    factor = snap_factor(float(rng.uniform(*FACTOR_RANGE)))
    threshold = factor * distance
    return threshold, factor, "yes" if distance > threshold else "no"


def size_compare(e1, e2, mode: str = "longer") -> str:
    if mode == "longer":
        a, b = max(e1), max(e2)
    elif mode == "taller":
        a, b = e1[2], e2[2]
    else:
        raise DomainError(f"unknown size mode {mode!r}")
    if abs(a - b) < SIZE_TIE:
        return "same"
    return "first" if a > b else "second"


def boxes_intersect(a: Instance3D, b: Instance3D) -> bool:
    return bool(np.all(a.lo < b.hi) and np.all(b.lo < a.hi))


def triplet_filter(a: Instance3D, b: Instance3D, c: Instance3D, up=WORLD_UP, forward=None) -> tuple[bool, str]:
    """Screen an (anchor, reference, target) triplet for ambiguous geometry."""
    for x, y in ((a, b), (a, c), (b, c)):
        if boxes_intersect(x, y):
            return False, "intersecting boxes"
    ab = np.asarray(b.center, dtype=np.float64) - np.asarray(a.center, dtype=np.float64)
    if np.linalg.norm(ab) < TRIPLET_MIN_DIST:
        return False, "anchor and reference too close"
    fwd = ab if forward is None else np.asarray(forward, dtype=np.float64)
    n = np.linalg.norm(fwd)
    if n == 0 or abs(fwd @ np.asarray(up, dtype=np.float64)) / n > COLLINEAR_DOT:
        return False, "forward collinear with up"
    return True, ""


# ---------------------------------------------------------------------------
# metric answers
# ---------------------------------------------------------------------------

def translation_distance(a: CameraView, b: CameraView) -> float:
    return float(np.linalg.norm(b.center - a.center))


def camera_displacement(a: CameraView, b: CameraView) -> np.ndarray:
    """Centre of b relative to a, in a's camera frame."""
    return a.R @ (b.center - a.center)


def camera_object_distance(view: CameraView, inst: Instance3D) -> float:
    return float(np.linalg.norm(np.asarray(inst.center) - view.center))


def inter_object_distance(a: Instance3D, b: Instance3D) -> float:
    return float(np.linalg.norm(np.asarray(a.center) - np.asarray(b.center)))


def bbox_answer(inst: Instance3D) -> list[float]:
    return sorted(float(e) for e in inst.extents)


def count_visible(instances, label: str, view_id) -> int:
    return sum(1 for i in instances if i.label == label and view_id in i.visible_views)


def exists_in_view(instances, label: str, view_id) -> bool:
    return count_visible(instances, label, view_id) > 0


def compute_answer(question_type: str, views: dict, instances: dict, **ref):
    """Ground truth for one question; ``ref`` names the views and instances involved."""

    def view(key):
        try:
            return views[ref[key]]
        except KeyError:
            raise DomainError(f"missing view for {key!r}") from None

    def inst(key):
        try:
            return instances[ref[key]]
        except KeyError:
            raise DomainError(f"missing instance for {key!r}") from None

    if question_type == "camera_translation":
        a, b = view("view_a"), view("view_b")
        mode = ref.get("mode", "distance")
        if mode == "direction":
            return dominant_translation_direction(camera_displacement(a, b))
        return translation_distance(a, b)
    if question_type == "camera_rotation":
        return relative_rotation(view("view_a"), view("view_b"))
    if question_type == "camera_object_distance_estimation":
        return camera_object_distance(view("view"), inst("target"))
    if question_type == "camera_object_relative_direction":
        if "anchor" in ref:
            return sector_classify(proxy_frame_yaw(inst("anchor").center, inst("facing").center,
                                                   inst("target").center))[1]
        return sector_classify(camera_yaw_of(view("view"), inst("target").center))[1]
    if question_type == "cross_view_cardinal_direction":
        b1 = compass_bearing(view("view_a").center, inst("first").center)
        b2 = compass_bearing(view("view_b").center, inst("second").center)
        return cardinal_label(transfer_cardinal(ref["assumed_bearing"], b1, b2))
    if question_type == "object_proxy_cardinal_direction":
        ref_c = inst("reference").center
        b1 = compass_bearing(ref_c, inst("first").center)
        b2 = compass_bearing(ref_c, inst("target").center)
        return cardinal_label(transfer_cardinal(ref["assumed_bearing"], b1, b2))
    if question_type == "inter_object_distance":
        return inter_object_distance(inst("first"), inst("second"))
    if question_type == "object_size_comparison":
        return size_compare(inst("first").extents, inst("second").extents, ref.get("mode", "longer"))
    if question_type == "object_bounding_size_estimation":
        return bbox_answer(inst("target"))
    if question_type == "object_counting":
        return count_visible(instances.values(), ref["label"], ref["view_id"])
    if question_type == "object_existence_estimation":
        return "yes" if exists_in_view(instances.values(), ref["label"], ref["view_id"]) else "no"
    raise DomainError(f"unknown question type {question_type!r}")


# ---------------------------------------------------------------------------
# view pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairConstraints:
    c_min: float = 0.2
    b_min: float = 0.5
    min_rotation: float = MIN_ROTATION_DEG
    depth_tol: float = 0.03

    @classmethod
    def from_dict(cls, d: dict) -> "PairConstraints":
        unknown = set(d) - {"c_min", "b_min", "min_rotation", "depth_tol"}
        if unknown:
            raise DomainError(f"unknown constraint keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class ViewSample:
    """One calibrated view with depth and the instance ids it shows."""

    id: str
    view: CameraView
    depth: np.ndarray
    visible: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class ViewPair:
    view_a: str
    view_b: str
    covisibility: float
    baseline: float
    rotation_deg: float


def pair_covisibility(a: ViewSample, b: ViewSample, depth_tol: float = 0.03) -> float:
    """Symmetric pair score: the smaller of the two directed covisibilities."""
    return min(covisibility(a.view, a.depth, b.view, b.depth, depth_tol),
               covisibility(b.view, b.depth, a.view, a.depth, depth_tol))


def relational_pair_ok(a: ViewSample, b: ViewSample, referenced=None) -> bool:
    """At least three instances across the pair, and the referenced ones not all in one view."""
    if len(a.visible | b.visible) < 3:
        return False
    if referenced is None:
        return True
    ref = set(referenced)
    return not (ref <= a.visible or ref <= b.visible)


def sample_view_pairs(samples, purpose: str = "translation", constraints: PairConstraints | None = None,
                      referenced=None) -> list[ViewPair]:
    """Unordered pairs of views that satisfy the constraints for one question family.

    ``purpose`` is ``translation``, ``rotation``, ``object`` or ``relational``.
    """
    if purpose not in ("translation", "rotation", "object", "relational"):
        raise DomainError(f"unknown pair purpose {purpose!r}")
    c = constraints or PairConstraints()
    samples = list(samples)
    out = []
    for a, b in combinations(samples, 2):
        baseline = translation_distance(a.view, b.view)
        rot = math.degrees(quat_angle(a.view.rotation, b.view.rotation))
        if purpose == "translation" and baseline < c.b_min:
            continue
        if purpose == "rotation" and rot < c.min_rotation:
            continue
        if purpose == "relational" and not relational_pair_ok(a, b, referenced):
            continue
        cov = pair_covisibility(a, b, c.depth_tol)
        if cov < c.c_min:
            continue
        out.append(ViewPair(a.id, b.id, cov, baseline, rot))
    return out
