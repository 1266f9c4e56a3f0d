"""Regenerate golden_hashes.json. Run once; commit the result; never rerun to make tests pass."""

import json
from pathlib import Path

from degkit.pipeline import KINDS, RECIPES, ChainInput, DegradationSpec, apply_chain, recipe_specs
from degkit.render import SceneRenderer, demo_scene

WIDTH, HEIGHT, SEED = 96, 72, 1234


def golden_cases():
    scene = demo_scene(WIDTH, HEIGHT)
    renderer = SceneRenderer(scene)
    inp = ChainInput.from_render(renderer(scene.camera("default")))
    out = {}
    for kind in KINDS:
        out[f"single/{kind}"] = apply_chain(inp, [DegradationSpec(kind, None, "bench", SEED)], renderer)
    for name in sorted(RECIPES):
        out[f"recipe/{name}"] = apply_chain(inp, recipe_specs(name, SEED), renderer)
    return out


if __name__ == "__main__":
    hashes = {k: r.manifest["output_id"] for k, r in golden_cases().items()}
    path = Path(__file__).with_name("golden_hashes.json")
    path.write_text(json.dumps(hashes, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(hashes)} hashes to {path}")
