import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from degkit import geometry as geo
from degkit.errors import DomainError
from degkit.imaging import CameraView, Rng, look_at, matrix_to_quat
from degkit.qa import instances_from_renders, view_samples_from_renders
from degkit.render import Primitive, Scene, SceneRenderer


# --- covisibility ------------------------------------------------------------

@pytest.fixture(scope="module")
def small_views():
    from degkit.render import demo_scene
    scene = demo_scene(80, 60)
    r = SceneRenderer(scene)
    views = dict(scene.cameras)
    intr = dict(fx=views["default"].fx, cx=views["default"].cx, cy=views["default"].cy)
    # yawed 40 degrees against a 60 degree field of view: roughly a third overlaps
    views["yaw40"] = look_at((0.0, 0.0, 1.2), (5.0 * math.sin(math.radians(40)), 5.0 * math.cos(math.radians(40)),
                                               1.2), **intr)
    return {k: r(v) for k, v in views.items()}


def test_self_covisibility_is_one(small_views):
    out = small_views["left"]
    assert geo.covisibility(out.view, out.depth, out.view, out.depth) == pytest.approx(1.0, abs=1e-6)


def test_opposite_facing_views_of_a_plane_are_disjoint():
    scene = Scene((Primitive("plane", (0.0, 5.0, 0.0), normal=(0.0, -1.0, 0.0), texture="solid"),),
                  width=40, height=30)
    r = SceneRenderer(scene)
    a = look_at((0, 0, 1), (0, 5, 1), fx=40, cx=19.5, cy=14.5)
    b = look_at((0, 0, 1), (0, -5, 1), fx=40, cx=19.5, cy=14.5)
    ra, rb = r(a), r(b)
    assert geo.covisibility(a, ra.depth, b, rb.depth) == 0.0


@pytest.mark.parametrize("pair", [("default", "left"), ("default", "yaw40"), ("high", "right")])
def test_covisibility_matches_naive_reprojector(small_views, pair):
    a, b = (small_views[k] for k in pair)
    got = geo.covisibility(a.view, a.depth, b.view, b.depth)
    ref = oracles.naive_covisibility(a.view, a.depth, b.view, b.depth)
    assert got == ref
    assert 0.0 < got < 1.0


def test_partial_overlap_pair_is_about_a_third(small_views):
    a, b = small_views["default"], small_views["yaw40"]
    assert 0.15 < geo.covisibility(a.view, a.depth, b.view, b.depth) < 0.5


def test_covisibility_requires_depth():
    v = CameraView(10, 10, 4, 4)
    with pytest.raises(DomainError):
        geo.covisibility(v, np.zeros((8, 8)), v, np.ones((8, 8)))


# --- translation direction ---------------------------------------------------

def test_translation_direction_examples():
    assert geo.dominant_translation_direction((0, 0, 1)) == "forward"
    assert geo.dominant_translation_direction((0.5, 0, 1)) == "forward"
    assert geo.dominant_translation_direction((0.6, 0, 1)) == "forward-right"
    assert geo.dominant_translation_direction((-1, 0, 0.2)) == "left"
    assert geo.dominant_translation_direction((0, -1, 0)) == "up"


def test_secondary_axis_boundary():
    r = geo.SECONDARY_RATIO
    assert geo.dominant_translation_direction((r, 0, 1)) == "forward-right"
    assert geo.dominant_translation_direction((r - 1e-4, 0, 1)) == "forward"
    assert geo.dominant_translation_direction((0, 0, -1)) == "backward"


def test_zero_translation_has_no_direction():
    with pytest.raises(DomainError):
        geo.dominant_translation_direction((0, 0, 0))


@given(st.floats(0.01, 10), st.floats(0, 0.99))
def test_secondary_rule_property(major, frac):
    label = geo.dominant_translation_direction((frac * major, 0, major))
    assert (label == "forward-right") == (frac >= geo.SECONDARY_RATIO)


# --- sectors -----------------------------------------------------------------

def test_sector_examples():
    assert geo.sector_classify(0)[1] == "front"
    assert geo.sector_classify(90)[1] == "right"
    assert geo.sector_classify(22.4)[1] == "front"
    assert geo.sector_classify(22.6)[1] == "front-right"


def test_sector_shift_over_grid():
    # shifting yaw by 45 degrees moves to the next sector, at every 0.1 degree step
    for k in range(3600):
        yaw = k / 10
        s, _ = geo.sector_classify(yaw)
        assert geo.sector_classify(yaw + 45.0)[0] == (s + 1) % 8
        assert geo.sector_classify(yaw + 360.0)[0] == s
        assert geo.sector_classify(yaw - 360.0)[0] == s
        centre = 45.0 * s
        delta = (yaw - centre + 180.0) % 360.0 - 180.0
        assert -22.5 <= delta < 22.5 + 1e-9


def test_forbidden_neighbor_examples():
    assert geo.forbidden_neighbor(21.0) == 1
    assert geo.forbidden_neighbor(0.0) is None
    assert geo.forbidden_neighbor(24.5) == 0


def test_forbidden_neighbor_over_grid():
    for k in range(3600):
        yaw = k / 10
        s, _ = geo.sector_classify(yaw)
        f = geo.forbidden_neighbor(yaw)
        near = geo.boundary_distance(yaw) < 3.0
        assert (f is not None) == near
        if f is not None:
            assert f in ((s + 1) % 8, (s - 1) % 8)
            # the forbidden sector is the one across the nearby boundary
            step = 1 if f == (s + 1) % 8 else -1
            assert geo.sector_classify(yaw + step * 3.0)[0] == f


def test_bearings_and_cardinals():
    assert geo.compass_bearing((0, 0, 0), (0, 1, 0)) == 0.0
    assert geo.compass_bearing((0, 0, 0), (1, 0, 0)) == 90.0
    assert geo.cardinal_label(90) == "east"
    assert geo.cardinal_label(200) == "south"
    assert geo.transfer_cardinal(0.0, 90.0, 180.0) == 90.0
    assert geo.proxy_frame_yaw((0, 0, 0), (0, 1, 0), (1, 0, 0)) == pytest.approx(90.0)
    assert geo.proxy_frame_yaw((0, 0, 0), (0, 1, 0), (-1, 1, 0)) == pytest.approx(315.0)


def test_camera_yaw_of_right_is_positive():
    v = look_at((0, 0, 1), (0, 5, 1), fx=50, cx=20, cy=20)
    assert geo.camera_yaw_of(v, (1, 5, 1)) == pytest.approx(math.degrees(math.atan2(1, 5)))


# --- rotation ----------------------------------------------------------------

def _rotated(view, m):
    return view.with_center(matrix_to_quat(m.T @ view.R), view.center)


def test_identical_poses_rejected():
    v = look_at((0, 0, 1), (0, 5, 1), fx=50, cx=20, cy=20)
    rot = geo.relative_rotation(v, v)
    assert not rot.accepted and "below 5" in rot.reason


def test_pure_yaw_is_single_dominant():
    v = look_at((0, 0, 1), (0, 5, 1), fx=50, cx=20, cy=20)
    w = _rotated(v, geo.compose_ypr(30, 0, 0))
    rot = geo.relative_rotation(v, w)
    assert (rot.yaw, rot.pitch, rot.roll) == pytest.approx((30, 0, 0), abs=1e-9)
    assert rot.angle == pytest.approx(30, abs=1e-9)
    assert rot.dominance == "single" and rot.accepted
    assert geo.rotation_label(rot) == "yaw right"


def test_yaw_then_pitch_is_dual_dominant():
    yaw, pitch, roll = geo.decompose_ypr(geo.compose_ypr(20, 15, 0))
    assert abs(pitch) / abs(yaw) == pytest.approx(0.75, abs=1e-9)
    rot = geo.classify_rotation(yaw, pitch, roll, 25.0)
    assert rot.dominance == "dual" and rot.accepted


@given(st.floats(-80, 80), st.floats(-80, 80), st.floats(-80, 80))
def test_ypr_roundtrip(y, p, r):
    assert geo.decompose_ypr(geo.compose_ypr(y, p, r)) == pytest.approx((y, p, r), abs=1e-8)


def test_rotation_thresholds():
    assert not geo.classify_rotation(4.9, 0, 0, 4.9).accepted
    assert geo.classify_rotation(5.0, 0, 0, 5.0).accepted
    lo = geo.SECONDARY_RATIO - geo.RATIO_BUFFER
    hi = geo.SECONDARY_RATIO + geo.RATIO_BUFFER
    assert geo.classify_rotation(30, 30 * (lo - 1e-3), 0, 30).dominance == "single"
    grey = [geo.classify_rotation(30, 30 * x, 0, 30) for x in np.linspace(lo + 1e-3, hi - 1e-3, 25)]
    assert all(not g.accepted and "grey" in g.reason for g in grey)
    assert geo.classify_rotation(30, 30 * (hi + 1e-3), 0, 30).dominance == "dual"
    assert not geo.classify_rotation(10, 86, 0, 86).accepted


# --- factors, sizes, triplets --------------------------------------------------

def test_snap_factor_examples():
    assert geo.snap_factor(1.0) == 0.85
    assert geo.snap_factor(1.3) == 1.3
    assert geo.snap_factor(0.9) == 0.85
    assert geo.snap_factor(1.1) == 1.15


def test_threshold_example():
    class Fixed:
        def uniform(self, lo, hi):
            return 0.85
    thr, f, ans = geo.threshold_for_translation(2.0, Fixed())
    assert thr == pytest.approx(1.7) and f == 0.85 and ans == "yes"


def test_factor_excludes_band_over_many_draws():
    rng = Rng(0, "factor")
    for _ in range(20000):
        _, f, _ = geo.threshold_for_translation(1.0, rng)
        assert not (0.85 < f < 1.15)
        assert 0.5 <= f <= 1.5


def test_size_compare():
    assert geo.size_compare((0.5, 0.4, 0.3), (0.5, 0.2, 0.1)) == "same"
    assert geo.size_compare((0.505, 0.1, 0.1), (0.5, 0.1, 0.1)) == "same"
    assert geo.size_compare((0.6, 0.1, 0.1), (0.5, 0.1, 0.1)) == "first"
    assert geo.size_compare((0.1, 0.1, 0.3), (0.5, 0.1, 0.6), "taller") == "second"


def _inst(i, c, e=(0.2, 0.2, 0.2)):
    return geo.Instance3D(i, f"obj{i}", c, e)


def test_triplet_filter():
    assert not geo.triplet_filter(_inst(1, (0, 0, 0)), _inst(2, (0.1, 0, 0)), _inst(3, (2, 2, 0)))[0]
    ok, _ = geo.triplet_filter(_inst(1, (0, 0, 0)), _inst(2, (0, 1, 0)), _inst(3, (2, 2, 0)))
    assert ok
    tiny = (0.01, 0.01, 0.01)
    close = geo.triplet_filter(_inst(1, (0, 0, 0), tiny), _inst(2, (0.05, 0, 0), tiny), _inst(3, (2, 2, 0), tiny))
    assert close == (False, "anchor and reference too close")
    up = geo.triplet_filter(_inst(1, (0, 0, 0)), _inst(2, (0, 1, 0)), _inst(3, (2, 2, 0)), forward=(0, 0, 1))
    assert up == (False, "forward collinear with up")


# --- answers -----------------------------------------------------------------

def test_metric_answers():
    a = CameraView(50, 50, 10, 10).with_center((0, 0, 0, 1), (0, 0, 0))
    b = a.with_center((0, 0, 0, 1), (3, 4, 0))
    assert geo.translation_distance(a, b) == 5.0
    box = geo.Instance3D(1, "box", (0, 0, 0), (0.3, 0.1, 0.2))
    assert geo.bbox_answer(box) == [0.1, 0.2, 0.3]
    chairs = [geo.Instance3D(i, "chair", (i, 0, 0), (0.5, 0.5, 0.9), ("v",)) for i in range(2)]
    assert geo.count_visible(chairs, "chair", "v") == 2
    assert geo.compute_answer("object_counting", {}, {c.id: c for c in chairs}, label="chair", view_id="v") == 2
    assert geo.compute_answer("camera_translation", {"a": a, "b": b}, {}, view_a="a", view_b="b") == 5.0
    with pytest.raises(DomainError):
        geo.compute_answer("inter_object_distance", {}, {}, first=1, second=2)


# --- view pairs --------------------------------------------------------------

def test_identical_views_excluded_from_translation(small_views):
    out = small_views["left"]
    s = [geo.ViewSample("a", out.view, out.depth), geo.ViewSample("b", out.view, out.depth)]
    assert geo.sample_view_pairs(s, "translation") == []
    assert len(geo.sample_view_pairs(s, "object")) == 1


def test_low_covisibility_pair_excluded(small_views):
    a, b = small_views["default"], small_views["yaw40"]
    s = [geo.ViewSample("a", a.view, a.depth), geo.ViewSample("b", b.view, b.depth)]
    cov = geo.pair_covisibility(s[0], s[1])
    assert geo.sample_view_pairs(s, "rotation", geo.PairConstraints(c_min=cov + 0.01)) == []
    assert len(geo.sample_view_pairs(s, "rotation", geo.PairConstraints(c_min=cov - 0.01))) == 1
    assert geo.sample_view_pairs(s, "rotation", geo.PairConstraints(c_min=0.2)) == [] or cov >= 0.2


def _three_box_scene(xs):
    prims = [Primitive("plane", (0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), texture="checker")]
    for i, x in enumerate(xs):
        prims.append(Primitive("box", (x, 4.0, 0.3), size=(0.4, 0.4, 0.6), texture="solid",
                               texture_seed=i, label=f"obj{i}"))
    return Scene(tuple(prims), width=80, height=60)


def _relational(xs):
    scene = _three_box_scene(xs)
    r = SceneRenderer(scene)
    intr = dict(fx=120.0, cx=39.5, cy=29.5)
    cams = {"a": look_at((-1.0, 0, 1.0), (-1.0, 4, 0.3), **intr), "b": look_at((1.0, 0, 1.0), (1.0, 4, 0.3), **intr)}
    renders = {k: r(v) for k, v in cams.items()}
    inst = instances_from_renders(scene, renders, min_pixels=10)
    a, b = view_samples_from_renders(renders, inst)
    return geo.relational_pair_ok(a, b, referenced=[i.id for i in inst]), a, b


def test_relational_pair_flips_when_objects_share_one_frustum():
    ok, a, b = _relational([-1.8, 0.0, 1.8])
    assert ok and len(a.visible | b.visible) == 3
    ok, a, b = _relational([-2.0, -1.4, -0.8])
    assert not ok
