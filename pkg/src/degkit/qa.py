"""Template-based question generation over calibrated views and 3D instances.

Every question type draws its ground truth from :mod:`degkit.geometry` and
builds multiple-choice distractors that avoid near-correct options.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from itertools import permutations

import numpy as np

from . import geometry as geo
from .errors import DomainError
from .imaging import Rng
from .render import RenderOutput, Scene

QUESTION_TYPES = (
    "camera_translation",
    "camera_rotation",
    "camera_object_distance_estimation",
    "camera_object_relative_direction",
    "cross_view_cardinal_direction",
    "inter_object_distance",
    "object_proxy_cardinal_direction",
    "object_size_comparison",
    "object_bounding_size_estimation",
    "object_existence_estimation",
    "object_counting",
)

TASK_GROUPS = {
    "camera_translation": "camera_centric",
    "camera_rotation": "camera_centric",
    "object_counting": "object_centric",
    "object_existence_estimation": "object_centric",
    "camera_object_distance_estimation": "object_centric",
    "object_bounding_size_estimation": "object_centric",
    "object_size_comparison": "object_centric",
    "inter_object_distance": "object_centric",
    "camera_object_relative_direction": "relational",
    "cross_view_cardinal_direction": "relational",
    "object_proxy_cardinal_direction": "relational",
}

FORMATS = ("mcq", "yes_no", "number", "triple")
LETTERS = "ABCD"
NUMBER_SUFFIX = " Output format: <answer>NUMBER</answer>."
MCQ_SUFFIX = " Reply with only the option letter."
YESNO_SUFFIX = " Output format: <answer>yes</answer> or <answer>no</answer>."

_AXIS_WORDS = (("right", "left"), ("down", "up"), ("forward", "backward"))
TRANSLATION_LABELS = tuple(
    [w for ws in _AXIS_WORDS for w in ws]
    + [f"{a}-{b}" for i, wa in enumerate(_AXIS_WORDS) for j, wb in enumerate(_AXIS_WORDS) if i != j
       for a in wa for b in wb]
)


def same_direction_labels(label: str) -> tuple:
    """Other spellings of a compound direction (``forward-left`` vs ``left-forward``)."""
    parts = set(label.split("-"))
    return tuple(x for x in TRANSLATION_LABELS if x != label and set(x.split("-")) == parts)


@dataclass
class QaItem:
    id: str
    question_type: str
    views: list
    instances: list
    template_id: str
    question: str
    answer: object
    format: str
    options: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def task_group(self) -> str:
        return TASK_GROUPS[self.question_type]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_group"] = self.task_group
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QaItem":
        return cls(d["id"], d["question_type"], list(d["views"]), list(d["instances"]), d["template_id"],
                   d["question"], d["answer"], d["format"], d.get("options"), dict(d.get("meta", {})))


def make_mcq(correct: str, pool, rng: Rng, forbidden=(), n: int = 4):
    """Shuffle the correct label with distractors from ``pool``; returns (options, letter)."""
    distractors = [p for p in pool if p != correct and p not in forbidden]
    if len(distractors) < n - 1:
        n = len(distractors) + 1
    idx = rng.generator.permutation(len(distractors))[: n - 1]
    chosen = [correct] + [distractors[i] for i in sorted(idx)]
    order = rng.generator.permutation(len(chosen))
    opts = {LETTERS[k]: chosen[i] for k, i in enumerate(order)}
    letter = next(k for k, v in opts.items() if v == correct)
    return opts, letter


def _options_text(opts: dict) -> str:
    return " ".join(f"{k}. {v}" for k, v in opts.items())


def _round(x: float, nd: int = 2) -> float:
    return float(round(x, nd))


def instances_from_renders(scene: Scene, renders: dict, min_pixels: int = 30) -> list[geo.Instance3D]:
    """Labelled scene primitives as 3D boxes, visible where they cover enough pixels."""
    out = []
    for idx, prim in scene.labelled():
        visible = tuple(sorted(vid for vid, r in renders.items()
                               if r.ids is not None and int(np.count_nonzero(r.ids == idx)) >= min_pixels))
        out.append(geo.Instance3D(idx, prim.label, tuple(map(float, prim.center)),
                                  tuple(map(float, prim.extents())), visible))
    return out


def view_samples_from_renders(renders: dict, instances) -> list[geo.ViewSample]:
    samples = []
    for vid in sorted(renders):
        r: RenderOutput = renders[vid]
        vis = frozenset(i.id for i in instances if vid in i.visible_views)
        samples.append(geo.ViewSample(vid, r.view, r.depth, vis))
    return samples


class _Builder:
    def __init__(self, samples, instances, seed: int, constraints: geo.PairConstraints):
        self.samples = {s.id: s for s in samples}
        self.views = {s.id: s.view for s in samples}
        self.instances = {i.id: i for i in instances}
        self.seed = seed
        self.c = constraints
        self.items: list[QaItem] = []
        self.counts: Counter = Counter()
        self._pairs: dict = {}
        label_counts = Counter(i.label for i in instances)
        # only labels with a single instance can be referred to unambiguously
        self.unique = [i for i in instances if label_counts[i.label] == 1]

    def rng(self, *parts) -> Rng:
        return Rng(self.seed, "qa/" + "/".join(map(str, parts)))

    def add(self, qtype, views, insts, template, question, answer, fmt, options=None, **meta):
        n = self.counts[qtype]
        self.counts[qtype] += 1
        self.items.append(QaItem(f"{qtype}-{n:04d}", qtype, list(views), list(insts), template, question,
                                 answer, fmt, options, meta))

    def pairs(self, purpose):
        if purpose not in self._pairs:
            self._pairs[purpose] = geo.sample_view_pairs(self.samples.values(), purpose, self.c)
        return self._pairs[purpose]

    # -- camera centric ----------------------------------------------------
    def camera_translation(self):
        qt = "camera_translation"
        for p in self.pairs("translation"):
            a, b = self.views[p.view_a], self.views[p.view_b]
            dist = geo.translation_distance(a, b)
            self.add(qt, [p.view_a, p.view_b], [], "numeric",
                     "How far did the camera move between view A and view B, in meters?" + NUMBER_SUFFIX,
                     _round(dist), "number")
            threshold, factor, ans = geo.threshold_for_translation(dist, self.rng(qt, p.view_a, p.view_b))
            self.add(qt, [p.view_a, p.view_b], [], "binary",
                     f"Did the camera travel more than {threshold:.2f} meters from view A to view B?"
                     + YESNO_SUFFIX, ans, "yes_no", factor=factor)
            disp = geo.camera_displacement(a, b)
            ok, _ = geo.translation_direction_usable(disp)
            if ok:
                label = geo.dominant_translation_direction(disp)
                opts, letter = make_mcq(label, TRANSLATION_LABELS, self.rng(qt, "mcq", p.view_a, p.view_b),
                                        same_direction_labels(label))
                self.add(qt, [p.view_a, p.view_b], [], "mcq_direction",
                         "In view A's camera frame, which way did the camera mainly move to reach view B? "
                         + _options_text(opts) + MCQ_SUFFIX, letter, "mcq", opts)

    def camera_rotation(self):
        qt = "camera_rotation"
        singles = [f"{k} {w}" for k, ws in geo._ROT_WORDS.items() for w in ws]
        for p in self.pairs("rotation"):
            rot = geo.relative_rotation(self.views[p.view_a], self.views[p.view_b])
            if not rot.accepted:
                continue
            label = geo.rotation_label(rot)
            rng = self.rng(qt, p.view_a, p.view_b)
            if rot.dominance == "single":
                opts, letter = make_mcq(label, singles, rng)
                template = "mcq_single"
                text = "Relative to view A's camera frame, which single rotation best describes going from A to B? "
            else:
                comps = rot.components()
                k1, k2 = sorted(comps, key=lambda k: -abs(comps[k]))[:2]
                pool = [f"{k1} {w1} + {k2} {w2}" for w1 in geo._ROT_WORDS[k1] for w2 in geo._ROT_WORDS[k2]]
                opts, letter = make_mcq(label, pool, rng)
                template = "mcq_dual"
                text = (f"Relative to view A's camera frame, which combination of {k1} and {k2} "
                        "describes the rotation from A to B? ")
            self.add(qt, [p.view_a, p.view_b], [], template, text + _options_text(opts) + MCQ_SUFFIX,
                     letter, "mcq", opts, yaw=rot.yaw, pitch=rot.pitch, roll=rot.roll)

    # -- single view object questions ------------------------------------------
    def single_view(self):
        labels = sorted({i.label for i in self.instances.values()})
        for vid in sorted(self.views):
            view = self.views[vid]
            for label in labels:
                n = geo.count_visible(self.instances.values(), label, vid)
                if n > 0:
                    self.add("object_counting", [vid], [i.id for i in self.instances.values()
                                                        if i.label == label and vid in i.visible_views],
                             "count", f"How many {label}s can be seen in this image?" + NUMBER_SUFFIX,
                             n, "number")
                self.add("object_existence_estimation", [vid], [], "exists",
                         f"Is any {label} visible in this image?" + YESNO_SUFFIX,
                         "yes" if n > 0 else "no", "yes_no")
            for inst in self.unique:
                if vid not in inst.visible_views:
                    continue
                self.add("camera_object_distance_estimation", [vid], [inst.id], "single_view",
                         f"How far is the {inst.label} from the camera, in meters?" + NUMBER_SUFFIX,
                         _round(geo.camera_object_distance(view, inst)), "number")
                self.add("object_bounding_size_estimation", [vid], [inst.id], "extents",
                         f"Give the 3D size of the {inst.label} as [shortest, middle, longest] edge in meters.",
                         [_round(e) for e in geo.bbox_answer(inst)], "triple")

    # -- two view object questions -------------------------------------------
    def two_view_objects(self):
        for p in self.pairs("object"):
            va, vb = p.view_a, p.view_b
            in_a = [i for i in self.unique if va in i.visible_views]
            in_b = [i for i in self.unique if vb in i.visible_views]
            for i1 in in_a:
                # object marked in A; distance needs it to be found again in B
                if vb in i1.visible_views:
                    self.add("camera_object_distance_estimation", [va, vb], [i1.id], "two_view",
                             f"The {i1.label} is marked in image A. How far is it from the camera of image B,"
                             " in meters?" + NUMBER_SUFFIX,
                             _round(geo.camera_object_distance(self.views[vb], i1)), "number")
                self._camera_direction(va, vb, i1)
            for i1 in in_a:
                for i2 in in_b:
                    if i1.id == i2.id:
                        continue
                    self.add("inter_object_distance", [va, vb], [i1.id, i2.id], "two_view",
                             f"The {i1.label} is marked in image A and the {i2.label} in image B. How far apart "
                             "are their centers, in meters?" + NUMBER_SUFFIX,
                             _round(geo.inter_object_distance(i1, i2)), "number")
                    self._size(va, vb, i1, i2)
                    self._cross_view_cardinal(va, vb, i1, i2)

    def _camera_direction(self, va, vb, inst):
        qt = "camera_object_relative_direction"
        view = self.views[vb]
        pc = view.world_to_camera(np.asarray(inst.center)[None])[0]
        ok, _ = geo.translation_direction_usable(pc)
        if not ok:
            return
        yaw = geo.camera_yaw_of(view, inst.center)
        correct = geo.sector_classify(yaw)[1]
        forb = geo.forbidden_neighbor(yaw)
        forbidden = () if forb is None else (geo.SECTOR_LABELS[forb],)
        opts, letter = make_mcq(correct, geo.SECTOR_LABELS, self.rng(qt, va, vb, inst.id), forbidden)
        self.add(qt, [va, vb], [inst.id], "two_view_direction",
                 f"The {inst.label} is marked in image A. Where was it relative to you when image B was taken? "
                 + _options_text(opts) + MCQ_SUFFIX, letter, "mcq", opts, yaw=yaw)

    def _size(self, va, vb, i1, i2):
        for mode, word in (("longer", "longer (by its longest side)"), ("taller", "taller")):
            ans = geo.size_compare(i1.extents, i2.extents, mode)
            names = {"first": f"the {i1.label}", "second": f"the {i2.label}", "same": "about the same"}
            opts, letter = make_mcq(names[ans], list(names.values()), self.rng("size", mode, va, vb, i1.id, i2.id))
            self.add("object_size_comparison", [va, vb], [i1.id, i2.id], f"mcq_{mode}",
                     f"Which is {word}: the {i1.label} in image A or the {i2.label} in image B? "
                     + _options_text(opts) + MCQ_SUFFIX, letter, "mcq", opts)

    def _cross_view_cardinal(self, va, vb, i1, i2):
        qt = "cross_view_cardinal_direction"
        rng = self.rng(qt, va, vb, i1.id, i2.id)
        assumed = 45.0 * int(rng.integers(0, 8))
        b1 = geo.compass_bearing(self.views[va].center, i1.center)
        b2 = geo.compass_bearing(self.views[vb].center, i2.center)
        bearing = geo.transfer_cardinal(assumed, b1, b2)
        correct = geo.cardinal_label(bearing)
        forb = geo.forbidden_neighbor(bearing)
        forbidden = () if forb is None else (geo.CARDINAL_LABELS[forb],)
        opts, letter = make_mcq(correct, geo.CARDINAL_LABELS, rng, forbidden)
        self.add(qt, [va, vb], [i1.id, i2.id], "assumed_direction",
                 f"Suppose the {i1.label} seen from image A lies to the {geo.cardinal_label(assumed)}. In that "
                 f"frame, which direction is the {i2.label} from the camera of image B? "
                 + _options_text(opts) + MCQ_SUFFIX, letter, "mcq", opts, assumed_bearing=assumed)

    # -- three object questions --------------------------------------------
    def relational(self):
        for a, b, c in permutations(self.unique, 3):
            ok, _ = geo.triplet_filter(a, b, c)
            if not ok:
                continue
            for p in self.pairs("object"):
                sa, sb = self.samples[p.view_a], self.samples[p.view_b]
                if not geo.relational_pair_ok(sa, sb, (a.id, b.id, c.id)):
                    continue
                union = self.samples[p.view_a].visible | self.samples[p.view_b].visible
                if not {a.id, b.id, c.id} <= union:
                    continue
                self._relpos(p, a, b, c)
                self._proxy_cardinal(p, a, b, c)

    def _relpos(self, p, a, b, c):
        qt = "camera_object_relative_direction"
        yaw = geo.proxy_frame_yaw(a.center, b.center, c.center)
        correct = geo.sector_classify(yaw)[1]
        forb = geo.forbidden_neighbor(yaw)
        forbidden = () if forb is None else (geo.SECTOR_LABELS[forb],)
        opts, letter = make_mcq(correct, geo.SECTOR_LABELS, self.rng(qt, "relpos", p.view_a, p.view_b, a.id, b.id, c.id),
                                forbidden)
        self.add(qt, [p.view_a, p.view_b], [a.id, b.id, c.id], "relpos",
                 f"You stand at the {a.label} facing the {b.label}. Where is the {c.label} relative to you? "
                 + _options_text(opts) + MCQ_SUFFIX, letter, "mcq", opts, yaw=yaw)

    def _proxy_cardinal(self, p, a, b, c):
        qt = "object_proxy_cardinal_direction"
        rng = self.rng(qt, p.view_a, p.view_b, a.id, b.id, c.id)
        assumed = 45.0 * int(rng.integers(0, 8))
        b1 = geo.compass_bearing(b.center, a.center)
        b2 = geo.compass_bearing(b.center, c.center)
        bearing = geo.transfer_cardinal(assumed, b1, b2)
        correct = geo.cardinal_label(bearing)
        forb = geo.forbidden_neighbor(bearing)
        forbidden = () if forb is None else (geo.CARDINAL_LABELS[forb],)
        opts, letter = make_mcq(correct, geo.CARDINAL_LABELS, rng, forbidden)
        self.add(qt, [p.view_a, p.view_b], [a.id, b.id, c.id], "proxy_frame",
                 f"The {a.label} is {geo.cardinal_label(assumed)} of the {b.label}. Which direction is the "
                 f"{c.label} from the {b.label}? " + _options_text(opts) + MCQ_SUFFIX,
                 letter, "mcq", opts, assumed_bearing=assumed)


def generate_qa(samples, instances, seed: int = 0, constraints: geo.PairConstraints | None = None,
                categories=None) -> list[QaItem]:
    """Questions of the requested categories (all by default), in a deterministic order."""
    cats = set(QUESTION_TYPES if categories is None else categories)
    unknown = cats - set(QUESTION_TYPES)
    if unknown:
        raise DomainError(f"unknown question types {sorted(unknown)}")
    samples = list(samples)
    if len(samples) < 1:
        raise DomainError("need at least one view")
    b = _Builder(samples, instances, seed, constraints or geo.PairConstraints())
    b.single_view()
    if len(samples) >= 2:
        b.camera_translation()
        b.camera_rotation()
        b.two_view_objects()
        b.relational()
    return [it for it in b.items if it.question_type in cats]


def category_counts(items) -> dict:
    counts = Counter(it.question_type for it in items)
    return {qt: counts.get(qt, 0) for qt in QUESTION_TYPES}


def dump_items(items) -> str:
    return json.dumps([it.to_dict() for it in items], indent=2, sort_keys=True) + "\n"
