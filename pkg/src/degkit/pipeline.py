"""Severity presets, mixture recipes and the ordered degradation chain.

A chain takes a clean linear frame (optionally with depth, pose and a renderer)
and a set of degradation specs, runs them in a fixed physical order and
returns an sRGB image together with a manifest that is enough to replay the
exact result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import digital, meteo, optical, photo
from .errors import ConstraintError, DomainError, FormatError
from .imaging import (CameraView, Rng, array_hash, check_depth, content_hash, default_intrinsics,
                      derive_seed, linear_to_srgb, srgb_to_linear)
from .render import Renderer, RenderOutput

SCHEMA_VERSION = 1
SEVERITIES = ("bench", "easy")

# (low, high, type, milder direction). "up": larger values are milder, "down":
# smaller values are milder, None: the parameter does not set the intensity.
PRESETS: dict[str, dict[str, tuple]] = {
    "defocus": {
        "aperture": (10.0, 15.0, float, "down"),
        "focus_depth": (1.0, 8.0, float, None),
    },
    "distortion": {
        "k1": (-0.24, -0.23, float, "up"),
        "k2": (0.0001, 0.0003, float, "down"),
        "k3": (0.0001, 0.0002, float, "down"),
        "k4": (0.0, 0.0001, float, "down"),
        "max_theta": (1.5, 1.5, float, None),
    },
    "haze": {"density": (3.5, 6.0, float, "down")},
    "jpeg_compression": {"quality": (2, 5, int, "up")},
    "low_light": {"exposure": (0.003, 0.005, float, "up")},
    "low_res": {"scale": (0.02, 0.05, float, "up")},
    "motion_blur": {
        "trans": (0.2, 0.35, float, "down"),
        "rot": (0.06, 0.12, float, "down"),
        "sub_steps": (80, 80, int, None),
    },
    "over_exposure": {"exposure": (7.0, 10.0, float, "down")},
    "water_droplets": {
        "scale": (2.5, 4.0, float, "down"),
        "radius": (0.25, 0.75, float, "down"),
        "strength": (0.3, 0.5, float, "down"),
        "blur_sigma": (2.0, 2.5, float, "down"),
        "blur_kernel": (9, 9, int, None),
    },
}

KINDS = tuple(sorted(PRESETS))

# physical formation order: optics, medium, sensor, then codec after encoding
STAGE_ORDER = (
    "motion_blur", "defocus", "distortion",
    "haze", "water_droplets",
    "low_light", "over_exposure",
    "low_res", "jpeg_compression",
)
ENCODED_STAGES = ("low_res", "jpeg_compression")
NEEDS_DEPTH = ("defocus", "haze")

ABBREVIATIONS = {
    "LL": "low_light", "MB": "motion_blur", "LR": "low_res", "HZ": "haze", "WD": "water_droplets",
    "OE": "over_exposure", "DF": "defocus", "JPEG": "jpeg_compression",
}

# name -> (primary at bench severity, auxiliaries at easy severity)
RECIPES: dict[str, tuple[str, tuple[str, ...]]] = {
    "night_capture": ("low_light", ("motion_blur", "low_res")),
    "hazy_long_range": ("haze", ("low_res", "motion_blur")),
    "wet_lens_motion": ("water_droplets", ("motion_blur", "low_light")),
    "backlit_dynamics": ("over_exposure", ("motion_blur",)),
    "motion_defocus": ("motion_blur", ("defocus", "low_res")),
    "compressed_portrait": ("defocus", ("jpeg_compression",)),
}


def _check_kind(kind: str) -> None:
    if kind not in PRESETS:
        raise DomainError(f"unknown degradation kind {kind!r}; expected one of {', '.join(KINDS)}")


def preset_range(kind: str, name: str, severity: str = "bench") -> tuple:
    """``(low, high)`` of one parameter at the given severity."""
    _check_kind(kind)
    if severity not in SEVERITIES:
        raise DomainError(f"unknown severity {severity!r}")
    lo, hi, _, milder = PRESETS[kind][name]
    if severity == "easy" and milder is not None:
        mid = 0.5 * (lo + hi)
        return (mid, hi) if milder == "up" else (lo, mid)
    return lo, hi


def sample_params(kind: str, severity: str, rng: Rng) -> dict:
    """Uniform draw of every parameter within its preset range."""
    _check_kind(kind)
    out = {}
    for name in sorted(PRESETS[kind]):
        lo, hi = preset_range(kind, name, severity)
        typ = PRESETS[kind][name][2]
        sub = rng.child(name)
        if typ is int:
            ilo, ihi = int(np.ceil(lo)), int(np.floor(hi))
            out[name] = int(sub.integers(ilo, ihi + 1))
        elif lo == hi:
            out[name] = float(lo)
        else:
            out[name] = float(sub.uniform(lo, hi))
    return out


def check_in_preset(kind: str, params: dict, severity: str) -> None:
    """Raise :class:`ConstraintError` if any preset parameter leaves its range."""
    for name, value in params.items():
        if name not in PRESETS[kind]:
            continue
        lo, hi = preset_range(kind, name, severity)
        if not lo <= value <= hi:
            raise ConstraintError(f"{kind}.{name}={value} outside the {severity} range [{lo}, {hi}]")


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    params: dict | None = None  # None means sample from the preset
    severity: str = "bench"
    seed: int = 0

    def __post_init__(self):
        _check_kind(self.kind)
        if self.severity not in SEVERITIES:
            raise DomainError(f"unknown severity {self.severity!r}")

    def resolve(self) -> dict:
        """Preset sample (or the given params) filled in with preset defaults."""
        sampled = sample_params(self.kind, self.severity, Rng(self.seed, f"params/{self.kind}"))
        if self.params is None:
            return sampled
        unknown = set(self.params) - set(PRESETS[self.kind])
        if unknown:
            raise DomainError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        merged = dict(sampled)
        merged.update({k: _plain(v) for k, v in self.params.items()})
        return merged

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "severity": self.severity, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        try:
            return cls(d["kind"], d.get("params"), d.get("severity", "bench"), int(d.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad degradation spec {d!r}") from exc


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def recipe_specs(name: str, seed: int) -> list[DegradationSpec]:
    if name not in RECIPES:
        raise DomainError(f"unknown recipe {name!r}; expected one of {', '.join(sorted(RECIPES))}")
    primary, aux = RECIPES[name]
    specs = [DegradationSpec(primary, None, "bench", derive_seed(seed, f"recipe/{name}/{primary}"))]
    specs += [DegradationSpec(k, None, "easy", derive_seed(seed, f"recipe/{name}/{k}")) for k in aux]
    return specs


def canonical_order(specs) -> list[DegradationSpec]:
    kinds = [s.kind for s in specs]
    if len(set(kinds)) != len(kinds):
        raise DomainError("a chain may contain each degradation kind at most once")
    if "low_light" in kinds and "over_exposure" in kinds:
        raise DomainError("low_light and over_exposure are mutually exclusive in one chain")
    return sorted(specs, key=lambda s: STAGE_ORDER.index(s.kind))


@dataclass
class ChainInput:
    """Clean linear frame plus whatever geometry is available for it."""

    linear: np.ndarray
    depth: np.ndarray | None = None
    view: CameraView | None = None

    def __post_init__(self):
        from .imaging import check_linear
        self.linear = check_linear(self.linear)
        if self.depth is not None:
            self.depth = check_depth(self.depth, self.linear.shape[:2])

    @classmethod
    def from_render(cls, out: RenderOutput) -> "ChainInput":
        return cls(out.color, out.depth, out.view)

    @classmethod
    def from_srgb(cls, img, depth=None, view=None) -> "ChainInput":
        return cls(srgb_to_linear(img), depth, view)

    @property
    def input_id(self) -> str:
        parts = [array_hash(self.linear)]
        if self.depth is not None:
            parts.append(array_hash(self.depth))
        if self.view is not None:
            parts.append(json.dumps(self.view.to_dict(), sort_keys=True))
        import hashlib
        return hashlib.sha256("|".join(parts).encode()).hexdigest()


def build_params(kind: str, values: dict, seed: int):
    """Typed parameter object for one stage."""
    try:
        if kind == "defocus":
            return optical.DefocusParams(values["aperture"], values["focus_depth"])
        if kind == "distortion":
            return optical.DistortionParams(values["k1"], values["k2"], values["k3"], values["k4"],
                                            values["max_theta"])
        if kind == "motion_blur":
            return optical.MotionBlurParams(values["trans"], values["rot"], int(values["sub_steps"]),
                                            derive_seed(seed, "motion_blur/direction"))
        if kind == "haze":
            return meteo.HazeParams(values["density"], values.get("atmospheric_light", meteo.DEFAULT_AIRLIGHT))
        if kind == "water_droplets":
            return meteo.DropletParams(values["scale"], values["radius"], values["strength"],
                                       values["blur_sigma"], int(values["blur_kernel"]),
                                       derive_seed(seed, "water_droplets/field"))
        if kind in ("low_light", "over_exposure"):
            return photo.ExposureParams(values["exposure"])
        if kind == "low_res":
            return digital.LowResParams(values["scale"])
        if kind == "jpeg_compression":
            return digital.JpegParams(int(values["quality"]))
    except KeyError as exc:
        raise DomainError(f"{kind} is missing parameter {exc}") from exc
    raise DomainError(f"unknown degradation kind {kind!r}")


@dataclass
class ChainResult:
    image: np.ndarray  # sRGB
    manifest: dict
    depth: np.ndarray | None = None
    flags: list = field(default_factory=list)


def apply_chain(inp: ChainInput, specs, renderer: Renderer | None = None,
                sensor: photo.SensorModel | None = None) -> ChainResult:
    """Run ``specs`` in canonical order and return the sRGB result and its manifest."""
    specs = list(specs)
    if not specs:
        raise DomainError("a chain needs at least one degradation")
    sensor = sensor or photo.SensorModel()
    ordered = canonical_order(specs)
    img = inp.linear
    depth = inp.depth
    view = inp.view
    flags: list[str] = []
    stages = []
    encoded = False

    for spec in ordered:
        values = spec.resolve()
        p = build_params(spec.kind, values, spec.seed)
        stage = {"kind": spec.kind, "severity": spec.severity, "seed": spec.seed, "params": values}

        if spec.kind in ENCODED_STAGES and not encoded:
            img = linear_to_srgb(img)
            encoded = True

        if spec.kind in NEEDS_DEPTH and depth is None:
            raise DomainError(f"{spec.kind} needs a depth map")

        if spec.kind == "motion_blur":
            if renderer is not None and view is not None:
                img = optical.apply_motion_blur(renderer, view, p)
                stage["mode"] = "render"
            else:
                if depth is None:
                    raise DomainError("motion_blur without a renderer needs a depth map for the warp fallback")
                if view is None:
                    view = _assumed_view(img)
                    flags.append("assumed_intrinsics")
                img = optical.apply_motion_blur_warp(img, depth, view, p)
                stage["mode"] = "warp"
                flags.append("motion_blur:approximate_warp")
        elif spec.kind == "defocus":
            img = optical.apply_defocus(img, depth, p)
        elif spec.kind == "distortion":
            if view is None:
                view = _assumed_view(img)
                flags.append("assumed_intrinsics")
            new_img = optical.apply_distortion(img, view, p)
            if depth is not None:
                depth = optical.distort_depth(depth, view, p)
            img = new_img
        elif spec.kind == "haze":
            img = meteo.apply_haze(img, depth, p)
        elif spec.kind == "water_droplets":
            img = meteo.apply_droplets(img, p)
        elif spec.kind == "low_light":
            img = photo.apply_low_light(img, p, sensor, Rng(spec.seed, "sensor/low_light"))
        elif spec.kind == "over_exposure":
            img = photo.apply_over_exposure(img, p, sensor, Rng(spec.seed, "sensor/over_exposure"))
        elif spec.kind == "low_res":
            img = digital.apply_low_res(img, p)
        elif spec.kind == "jpeg_compression":
            img = digital.apply_jpeg(img, p)
        stages.append(stage)

    if not encoded:
        img = linear_to_srgb(img)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "input_id": inp.input_id,
        "input": {
            "width": int(img.shape[1]),
            "height": int(img.shape[0]),
            "has_depth": inp.depth is not None,
            "view": inp.view.to_dict() if inp.view is not None else None,
            "renderer": renderer is not None,
        },
        "sensor": {"gain": sensor.gain, "read_sigma": sensor.read_sigma},
        "stages": stages,
        "approximations": sorted(set(flags)),
        "output_id": content_hash(img),
    }
    return ChainResult(img, manifest, depth, flags)


def _assumed_view(img) -> CameraView:
    h, w = img.shape[:2]
    return CameraView(**default_intrinsics(w, h), rotation=(0.0, 0.0, 0.0, 1.0), translation=(0.0, 0.0, 0.0))


def manifest_specs(manifest: dict) -> list[DegradationSpec]:
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported manifest schema version {manifest.get('schema_version')!r}")
    try:
        return [DegradationSpec(s["kind"], dict(s["params"]), s["severity"], int(s["seed"]))
                for s in manifest["stages"]]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed manifest: {exc}") from exc


def replay(manifest: dict, inp: ChainInput, renderer: Renderer | None = None) -> ChainResult:
    """Re-run the stages recorded in ``manifest`` on the same input."""
    specs = manifest_specs(manifest)
    s = manifest.get("sensor") or {}
    sensor = photo.SensorModel(s.get("gain", 2.5e-4), s.get("read_sigma", 2e-3))
    if manifest["input"].get("renderer") and renderer is None:
        raise DomainError("manifest was produced with a renderer; pass one to replay it")
    return apply_chain(inp, specs, renderer, sensor)


def dump_manifest(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def load_manifest(text: str) -> dict:
    try:
        m = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(m, dict):
        raise FormatError("manifest must be a JSON object")
    manifest_specs(m)
    return m
