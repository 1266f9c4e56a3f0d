"""``degkit`` command line.

Exit codes: 0 success, 2 input or usage error, 3 constraint violation.
The default output directory is taken from ``$DEGKIT_OUT`` (else the current
directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry as geo
from . import metrics, pipeline, qa
from .errors import ConstraintError, DomainError, FormatError, SolverError
from .imaging import CameraView, linear_to_srgb
from .rasterio import read_float_raster, read_srgb_png, write_float_raster, write_srgb_png
from .render import SceneRenderer, demo_scene, load_scene, scene_to_dict

log = logging.getLogger("degkit")

EXIT_OK, EXIT_INPUT, EXIT_CONSTRAINT = 0, 2, 3
OUT_ENV = "DEGKIT_OUT"


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


def preset_table() -> str:
    lines = ["Parameter ranges (bench severity):"]
    for kind in pipeline.KINDS:
        parts = []
        for name, (lo, hi, typ, _) in pipeline.PRESETS[kind].items():
            parts.append(f"{name} = {lo}" if lo == hi else f"{name} in [{lo}, {hi}]")
        lines.append(f"  {kind:<17} " + ", ".join(parts))
    lines.append("Easy severity draws from the milder half of each range.")
    return "\n".join(lines)


def recipe_table() -> str:
    lines = ["Recipes (primary at bench severity, auxiliaries at easy severity):"]
    for name, (primary, aux) in pipeline.RECIPES.items():
        lines.append(f"  {name:<20} primary {primary}; auxiliaries {', '.join(aux)}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# shared input handling
# ---------------------------------------------------------------------------

def _load_scene(spec: str, width: int | None, height: int | None):
    if spec == "demo":
        return demo_scene(width or 320, height or 240)
    if not Path(spec).is_file():
        raise InputError(f"scene file not found: {spec}")
    scene = load_scene(spec)
    if (width and width != scene.width) or (height and height != scene.height):
        sx = (width or scene.width) / scene.width
        sy = (height or scene.height) / scene.height
        cams = {k: _scale_view(v, sx, sy) for k, v in scene.cameras.items()}
        from dataclasses import replace
        scene = replace(scene, cameras=cams, width=width or scene.width, height=height or scene.height)
    return scene


def _scale_view(v: CameraView, sx: float, sy: float) -> CameraView:
    return CameraView(v.fx * sx, v.fy * sy, (v.cx + 0.5) * sx - 0.5, (v.cy + 0.5) * sy - 0.5,
                      v.rotation, v.translation)


def _load_pose(scene, args) -> CameraView:
    if getattr(args, "pose_file", None):
        try:
            return CameraView.from_dict(json.loads(Path(args.pose_file).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"cannot read pose file {args.pose_file}: {exc}") from exc
    return scene.camera(args.pose)


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _chain_input(args):
    """Returns ``(ChainInput, renderer or None)`` from ``--scene`` or ``--input``."""
    if args.scene:
        scene = _load_scene(args.scene, args.width, args.height)
        renderer = SceneRenderer(scene)
        view = _load_pose(scene, args)
        return pipeline.ChainInput.from_render(renderer(view)), renderer
    if not args.input:
        raise InputError("give --input IMAGE or --scene SCENE")
    if not Path(args.input).is_file():
        raise InputError(f"input image not found: {args.input}")
    img = read_srgb_png(args.input)
    depth = None
    if args.depth:
        if not Path(args.depth).is_file():
            raise InputError(f"depth file not found: {args.depth}")
        depth = read_float_raster(args.depth)
        if depth.shape != img.shape[:2]:
            raise InputError("depth size does not match the image")
    view = None
    if args.pose_file:
        view = CameraView.from_dict(_read_json(args.pose_file))
    return pipeline.ChainInput.from_srgb(img, depth, view), None


def _parse_params(items) -> dict:
    out = {}
    for item in items or ():
        for part in item.split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise InputError(f"--params expects key=value, got {part!r}")
            k, v = part.split("=", 1)
            try:
                out[k.strip()] = int(v) if v.strip().lstrip("-").isdigit() else float(v)
            except ValueError as exc:
                raise InputError(f"parameter {k} is not a number: {v!r}") from exc
    return out


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_result(args, res: pipeline.ChainResult, name: str) -> None:
    out = _out_dir(args)
    res.manifest["cli_seed"] = args.seed
    write_srgb_png(out / f"{name}.png", res.image)
    (out / f"{name}.manifest.json").write_text(pipeline.dump_manifest(res.manifest))
    print(json.dumps({"image": str(out / f"{name}.png"), "manifest": str(out / f"{name}.manifest.json"),
                      "output_id": res.manifest["output_id"]}))


def _check_depth_needed(kinds, inp, renderer) -> None:
    for k in kinds:
        if k in pipeline.NEEDS_DEPTH and inp.depth is None:
            raise InputError(f"{k} needs a depth map (--depth) or a rendered scene (--scene)")
        if k == "motion_blur" and renderer is None and inp.depth is None:
            raise InputError("motion_blur on a plain image needs --depth for the warp fallback")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    scene = _load_scene(args.scene, args.width, args.height)
    view = _load_pose(scene, args)
    out_r = SceneRenderer(scene)(view)
    out = _out_dir(args)
    name = args.name
    write_srgb_png(out / f"{name}.png", linear_to_srgb(out_r.color))
    write_float_raster(out / f"{name}_linear.dkfr", out_r.color)
    write_float_raster(out / f"{name}_depth.dkfr", out_r.depth)
    (out / f"{name}_pose.json").write_text(json.dumps(view.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.scene == "demo":
        (out / f"{name}_scene.json").write_text(json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n")
    h, w = out_r.depth.shape
    print(json.dumps({"color": str(out / f"{name}.png"), "depth": str(out / f"{name}_depth.dkfr"),
                      "center_depth": float(out_r.depth[h // 2, w // 2])}))
    return EXIT_OK


def cmd_degrade(args) -> int:
    inp, renderer = _chain_input(args)
    params = _parse_params(args.params) or None
    severity = args.severity or "bench"
    if params is not None and args.severity:
        pipeline.check_in_preset(args.type, params, args.severity)
    _check_depth_needed([args.type], inp, renderer)
    spec = pipeline.DegradationSpec(args.type, params, severity, args.seed)
    res = pipeline.apply_chain(inp, [spec], renderer)
    _write_result(args, res, args.name or args.type)
    return EXIT_OK


def cmd_recipe(args) -> int:
    if args.recipe not in pipeline.RECIPES:
        raise InputError(f"unknown recipe {args.recipe!r}; choose from {', '.join(pipeline.RECIPES)}")
    inp, renderer = _chain_input(args)
    specs = pipeline.recipe_specs(args.recipe, args.seed)
    _check_depth_needed([s.kind for s in specs], inp, renderer)
    res = pipeline.apply_chain(inp, specs, renderer)
    res.manifest["recipe"] = args.recipe
    _write_result(args, res, args.name or args.recipe)
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = pipeline.load_manifest(Path(args.manifest).read_text()) if Path(args.manifest).is_file() else None
    if manifest is None:
        raise InputError(f"manifest not found: {args.manifest}")
    inp, renderer = _chain_input(args)
    res = pipeline.replay(manifest, inp, renderer)
    match = res.manifest["output_id"] == manifest["output_id"]
    if args.out or os.environ.get(OUT_ENV):
        write_srgb_png(_out_dir(args) / f"{args.name or 'replay'}.png", res.image)
    print(json.dumps({"expected": manifest["output_id"], "actual": res.manifest["output_id"], "match": match}))
    return EXIT_OK if match else EXIT_CONSTRAINT


def _scene_views(args):
    scene = _load_scene(args.scene, args.width, args.height)
    names = args.views.split(",") if args.views else sorted(scene.cameras)
    renderer = SceneRenderer(scene)
    renders = {n: renderer(scene.camera(n)) for n in names}
    return scene, renders


def cmd_covis(args) -> int:
    _, renders = _scene_views(args)
    names = list(renders)
    matrix = {a: {b: geo.covisibility(renders[a].view, renders[a].depth, renders[b].view, renders[b].depth,
                                      args.depth_tol) for b in names} for a in names}
    text = json.dumps({"depth_tol": args.depth_tol, "covisibility": matrix}, indent=2, sort_keys=True) + "\n"
    if args.out or os.environ.get(OUT_ENV):
        (_out_dir(args) / "covisibility.json").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_qa_gen(args) -> int:
    scene, renders = _scene_views(args)
    if args.instances:
        raw = _read_json(args.instances)
        try:
            instances = [geo.Instance3D.from_dict(d) for d in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed instances file: {exc}") from exc
    else:
        instances = qa.instances_from_renders(scene, renders, args.min_pixels)
    constraints = geo.PairConstraints()
    if args.constraints:
        try:
            constraints = geo.PairConstraints.from_dict(_read_json(args.constraints))
        except (TypeError, ValueError) as exc:
            raise InputError(f"malformed constraints file: {exc}") from exc
    cats = args.categories.split(",") if args.categories else None
    items = qa.generate_qa(qa.view_samples_from_renders(renders, instances), instances, args.seed, constraints, cats)
    out = _out_dir(args)
    (out / args.name).write_text(qa.dump_items(items))
    counts = qa.category_counts(items)
    for k, v in counts.items():
        print(f"{k:<36} {v}")
    print(f"{'total':<36} {len(items)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    items = _read_json(args.qa)
    preds = _read_json(args.predictions)
    if not isinstance(items, list) or not isinstance(preds, dict):
        raise InputError("QA file must be a JSON list and predictions a JSON object")
    ids = {it["id"] for it in items}
    maps = preds.values() if preds and all(isinstance(v, dict) for v in preds.values()) else [preds]
    for m in maps:
        unknown = sorted(set(m) - ids)
        missing = sorted(ids - set(m))
        if unknown:
            raise InputError(f"predictions reference unknown ids: {', '.join(unknown)}")
        if missing and not args.allow_missing:
            raise InputError(f"missing predictions for ids: {', '.join(missing)}")
    report = metrics.evaluate(items, preds)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (_out_dir(args) / args.name).write_text(text)
    for cond, r in report["conditions"].items():
        print(f"{cond}: overall {r['overall']:.4f}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    table = _read_json(args.table)
    try:
        rep = metrics.correlation_report(table)
    except (KeyError, TypeError, AttributeError) as exc:
        raise InputError(f"malformed score table: {exc}") from exc
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    (_out_dir(args) / args.name).write_text(text)
    for cond, r in rep["overall"].items():
        print(f"{cond:<17} " + ("degenerate" if r["degenerate"] else f"|r| = {r['r_abs']:.4f}"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--presets", help="JSON file overriding preset ranges: {kind: {param: [lo, hi]}}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")


def _add_scene(p, required=False) -> None:
    p.add_argument("--scene", required=required, help="scene JSON file, or 'demo' for the built-in room")
    p.add_argument("--pose", default="default", help="camera preset name in the scene (default 'default')")
    p.add_argument("--pose-file", help="JSON camera: fx, fy, cx, cy and rotation/translation or eye/target/up")
    p.add_argument("--width", type=int, help="render width (default: scene width)")
    p.add_argument("--height", type=int, help="render height (default: scene height)")


def _add_image_input(p) -> None:
    p.add_argument("--input", help="sRGB PNG input (used when --scene is not given)")
    p.add_argument("--depth", help="float raster depth map (meters, 0 = invalid) aligned with --input")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    ap = argparse.ArgumentParser(prog="degkit", description="Physically based image degradations and "
                                 "spatial QA tooling.", formatter_class=fmt)
    ap.add_argument("--version", action="version", version=f"degkit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene view to color, linear and depth rasters", formatter_class=fmt)
    _add_common(p)
    _add_scene(p, required=True)
    p.add_argument("--name", default="render", help="output file stem")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("degrade", help="apply one degradation", formatter_class=fmt,
                       epilog=preset_table())
    _add_common(p)
    _add_scene(p)
    _add_image_input(p)
    p.add_argument("--type", required=True, choices=pipeline.KINDS, help="degradation kind")
    p.add_argument("--severity", choices=pipeline.SEVERITIES,
                   help="sample from this preset; with --params, params must stay inside it (else exit 3)")
    p.add_argument("--params", action="append", help="explicit parameters, e.g. exposure=0.004 (repeatable)")
    p.add_argument("--name", help="output file stem (default: the type)")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("recipe", help="apply a mixed-degradation recipe", formatter_class=fmt,
                       epilog=recipe_table() + "\n\n" + preset_table())
    _add_common(p)
    _add_scene(p)
    _add_image_input(p)
    p.add_argument("--name", dest="recipe", required=True, help="recipe name")
    p.add_argument("--output-name", dest="name", help="output file stem (default: the recipe name)")
    p.set_defaults(func=cmd_recipe)

    p = sub.add_parser("replay", help="re-run a manifest and compare content hashes", formatter_class=fmt)
    _add_common(p)
    _add_scene(p)
    _add_image_input(p)
    p.add_argument("--manifest", required=True, help="manifest JSON written by degrade or recipe")
    p.add_argument("--name", help="output file stem when writing the replayed image")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("covis", help="pairwise covisibility matrix of scene views", formatter_class=fmt)
    _add_common(p)
    _add_scene(p, required=True)
    p.add_argument("--views", help="comma-separated camera names (default: all)")
    p.add_argument("--depth-tol", type=float, default=0.03, help="relative depth tolerance (default 0.03)")
    p.set_defaults(func=cmd_covis)

    p = sub.add_parser("qa-gen", help="generate spatial QA items", formatter_class=fmt,
                       epilog="Question types: " + ", ".join(qa.QUESTION_TYPES))
    _add_common(p)
    _add_scene(p, required=True)
    p.add_argument("--views", help="comma-separated camera names (default: all)")
    p.add_argument("--instances", help="instances JSON (default: labelled scene objects)")
    p.add_argument("--constraints", help="JSON with c_min, b_min, min_rotation, depth_tol")
    p.add_argument("--categories", help="comma-separated question types (default: all)")
    p.add_argument("--min-pixels", type=int, default=30, help="pixels needed to count an instance as visible")
    p.add_argument("--name", default="qa.json", help="output file name")
    p.set_defaults(func=cmd_qa_gen)

    p = sub.add_parser("eval", help="score predictions against QA items", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--qa", required=True, help="QA JSON from qa-gen")
    p.add_argument("--predictions", required=True,
                   help="JSON {id: text} or {condition: {id: text}}")
    p.add_argument("--allow-missing", action="store_true", help="score missing predictions as 0 instead of failing")
    p.add_argument("--name", default="report.json", help="output file name")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", help="absolute point-biserial correlation per degradation",
                       formatter_class=fmt)
    _add_common(p)
    p.add_argument("--table", required=True,
                   help='score table JSON {"scores": {model: {condition: score}}, "slices": {...}}')
    p.add_argument("--name", default="correlation.json", help="output file name")
    p.set_defaults(func=cmd_correlate)
    return ap


def _apply_preset_overrides(path: str) -> dict:
    """Patch preset ranges in place; returns the previous values for restoring."""
    data = _read_json(path)
    saved = {}
    for kind, params in data.items():
        if kind not in pipeline.PRESETS:
            raise InputError(f"unknown degradation kind in presets file: {kind}")
        for name, rng in params.items():
            if name not in pipeline.PRESETS[kind]:
                raise InputError(f"unknown parameter {kind}.{name} in presets file")
            lo, hi, typ, milder = pipeline.PRESETS[kind][name]
            saved[(kind, name)] = (lo, hi, typ, milder)
            pipeline.PRESETS[kind][name] = (typ(rng[0]), typ(rng[1]), typ, milder)
    return saved


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    saved = {}
    try:
        if args.presets:
            saved = _apply_preset_overrides(args.presets)
        return args.func(args)
    except ConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (InputError, FormatError, DomainError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        for (kind, name), val in saved.items():
            pipeline.PRESETS[kind][name] = val


if __name__ == "__main__":
    sys.exit(main())
