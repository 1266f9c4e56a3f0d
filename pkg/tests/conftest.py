import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from degkit.render import SceneRenderer, demo_scene  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scene():
    return demo_scene(320, 240)


@pytest.fixture(scope="session")
def renderer(scene):
    return SceneRenderer(scene)


@pytest.fixture(scope="session")
def clean(scene, renderer):
    """Default-camera render of the demo room at 320x240."""
    return renderer(scene.camera("default"))


@pytest.fixture
def smooth_rgb():
    """Smooth, natural-looking sRGB raster without hard chroma edges."""
    h, w = 64, 96
    yy, xx = np.mgrid[0:h, 0:w] / 16.0
    img = np.stack([
        0.5 + 0.3 * np.sin(xx) * np.cos(0.7 * yy),
        0.45 + 0.25 * np.cos(0.8 * xx + 0.3 * yy),
        0.4 + 0.2 * np.sin(0.5 * xx - 0.9 * yy),
    ], axis=-1)
    return np.clip(img, 0.0, 1.0)
