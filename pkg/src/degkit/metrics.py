"""Answer parsing, scoring and degradation sensitivity.

Multiple-choice and yes/no items score by exact match. Numeric items use the
mean relative accuracy over confidence thresholds 0.50, 0.55, ..., 0.95.
Three-number size answers average that score over sorted components.
Sensitivity of a score to a degradation is the absolute point-biserial
correlation between a clean/degraded indicator and the scores.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .errors import DegenerateError, DomainError

THRESHOLDS = tuple(Fraction(50 + 5 * i, 100) for i in range(10))

_ANSWER_RE = re.compile(r"<answer>((?:(?!<answer>).)*?)</answer>", re.IGNORECASE | re.DOTALL)
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_YESNO_RE = re.compile(r"(?<![A-Za-z])(yes|no)(?![A-Za-z])", re.IGNORECASE)
_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")


@dataclass(frozen=True)
class Prediction:
    raw: str
    value: object
    status: str  # "ok" | "resorted" | "unparseable"

    @property
    def ok(self) -> bool:
        return self.status != "unparseable"


def _exact(x) -> Fraction:
    """Rational value of a number as written (``0.3`` is exactly 3/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("non-finite number")
    return Fraction(Decimal(repr(x)))


def answer_span(raw: str) -> str:
    """Innermost ``<answer>...</answer>`` content, or the whole text."""
    m = _ANSWER_RE.search(raw)
    return m.group(1) if m else raw


def parse_answer(raw: str, fmt: str, letters: str = "ABCD") -> Prediction:
    text = answer_span(raw or "").strip()
    if fmt == "mcq":
        cls = re.escape(letters)
        upper = re.search(rf"(?<![A-Za-z])([{cls}])(?![A-Za-z])", text)
        if upper:
            return Prediction(raw, upper.group(1), "ok")
        lower = re.search(rf"(?<![A-Za-z])([{cls.lower()}])(?![A-Za-z])", text)
        if lower:
            return Prediction(raw, lower.group(1).upper(), "ok")
    elif fmt == "yes_no":
        m = _YESNO_RE.search(text)
        if m:
            return Prediction(raw, m.group(1).lower(), "ok")
    elif fmt == "number":
        m = _NUMBER_RE.search(text)
        if m:
            return Prediction(raw, float(m.group(0)), "ok")
    elif fmt == "triple":
        for m in _BRACKET_RE.finditer(text):
            nums = _NUMBER_RE.findall(m.group(1))
            if len(nums) == 3:
                vals = [float(n) for n in nums]
                status = "ok" if vals == sorted(vals) else "resorted"
                return Prediction(raw, tuple(sorted(vals)), status)
    else:
        raise DomainError(f"unknown answer format {fmt!r}")
    return Prediction(raw, None, "unparseable")


def mra(pred, gt, thresholds=THRESHOLDS) -> float:
    """Share of thresholds ``t`` with ``|pred - gt| / gt < 1 - t``."""
    g = _exact(gt)
    if g <= 0:
        raise DomainError("ground truth must be positive")
    rel = abs(_exact(pred) - g) / g
    hits = sum(1 for t in thresholds if rel < 1 - _exact(t))
    return hits / len(thresholds)


def list_mra(pred, gt, thresholds=THRESHOLDS, return_flag: bool = False):
    """Equal-weight MRA over rank-matched components of two triples."""
    p = list(pred)
    g = list(gt)
    if len(p) != len(g) or not g:
        raise DomainError("triples must have equal, non-zero length")
    resorted = p != sorted(p) or g != sorted(g)
    p, g = sorted(p), sorted(g)
    hits = 0
    for a, b in zip(p, g):
        hits += round(mra(a, b, thresholds) * len(thresholds))
    score = hits / (len(thresholds) * len(g))
    return (score, resorted) if return_flag else score


def score_item(item, raw: str | None) -> float:
    """Score one QA item (dict or object with ``format``/``answer``/``options``)."""
    get = item.get if isinstance(item, dict) else lambda k, d=None: getattr(item, k, d)
    fmt = get("format")
    answer = get("answer")
    if raw is None:
        return 0.0
    letters = "".join(sorted(get("options") or {})) or "ABCD"
    pred = parse_answer(raw, fmt, letters)
    if not pred.ok:
        return 0.0
    if fmt in ("mcq", "yes_no"):
        return 1.0 if str(pred.value).lower() == str(answer).lower() else 0.0
    if fmt == "number":
        return mra(pred.value, answer)
    if fmt == "triple":
        return list_mra(pred.value, answer)
    raise DomainError(f"unknown answer format {fmt!r}")


def accuracy(items, predictions: dict) -> float:
    """Exact-match rate over multiple-choice and yes/no items; missing predictions are wrong."""
    scored = [it for it in items if (it["format"] if isinstance(it, dict) else it.format) in ("mcq", "yes_no")]
    if not scored:
        raise DomainError("no multiple-choice or yes/no items to score")
    total = 0.0
    for it in scored:
        iid = it["id"] if isinstance(it, dict) else it.id
        total += score_item(it, predictions.get(iid))
    return total / len(scored)


def point_biserial(clean, degraded) -> float:
    """|Pearson r| between the indicator [0]*M + [1]*M and the concatenated scores."""
    clean = np.asarray(clean, dtype=np.float64)
    degraded = np.asarray(degraded, dtype=np.float64)
    if clean.shape != degraded.shape or clean.ndim != 1:
        raise DomainError("clean and degraded scores must be equal-length vectors")
    if clean.size < 2:
        raise DomainError("need at least two models")
    y = np.concatenate([clean, degraded])
    x = np.concatenate([np.zeros(clean.size), np.ones(degraded.size)])
    yc = y - y.mean()
    syy = float(yc @ yc)
    if syy == 0 or np.ptp(y) == 0:
        raise DegenerateError("scores have zero variance")
    xc = x - x.mean()
    r = float(xc @ yc) / math.sqrt(float(xc @ xc) * syy)
    return min(abs(r), 1.0)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _mean(xs):
    return float(sum(xs) / len(xs)) if xs else None


def evaluate(items, predictions: dict) -> dict:
    """Per-item scores rolled up overall and by question type, format and task group.

    ``predictions`` maps item id to raw text, or condition name to such a map.
    """
    items = [it if isinstance(it, dict) else it.to_dict() for it in items]
    if not items:
        raise DomainError("no items to evaluate")
    if predictions and all(isinstance(v, dict) for v in predictions.values()):
        conditions = predictions
    else:
        conditions = {"clean": predictions}

    report = {"conditions": {}}
    for cond in sorted(conditions):
        preds = conditions[cond]
        per_item = {}
        groups = {"question_type": defaultdict(list), "format": defaultdict(list),
                  "task_group": defaultdict(list)}
        unparseable = 0
        for it in items:
            raw = preds.get(it["id"])
            if raw is not None and not parse_answer(raw, it["format"], "".join(sorted(it.get("options") or {})) or "ABCD").ok:
                unparseable += 1
            s = score_item(it, raw)
            per_item[it["id"]] = s
            for key in groups:
                groups[key][it.get(key) or it.get("question_type")].append(s)
        mc = [per_item[it["id"]] for it in items if it["format"] in ("mcq", "yes_no")]
        na = [per_item[it["id"]] for it in items if it["format"] in ("number", "triple")]
        report["conditions"][cond] = {
            "overall": _mean(list(per_item.values())),
            "accuracy": _mean(mc),
            "mra": _mean(na),
            "n_items": len(items),
            "n_unparseable": unparseable,
            "by_question_type": {k: _mean(v) for k, v in sorted(groups["question_type"].items())},
            "by_format": {k: _mean(v) for k, v in sorted(groups["format"].items())},
            "by_task_group": {k: _mean(v) for k, v in sorted(groups["task_group"].items())},
            "items": per_item,
        }
    return report


def correlation_report(table: dict) -> dict:
    """|r| per degradation for the overall scores and for every slice in the table.

    ``table``: ``{"scores": {model: {condition: score}}, "slices": {name: {model: {condition: score}}}}``;
    the clean condition is named ``clean``.
    """

    def one(scores: dict) -> dict:
        models = sorted(scores)
        conds = sorted({c for m in models for c in scores[m]} - {"clean"})
        out = {}
        for cond in conds:
            usable = [m for m in models if "clean" in scores[m] and cond in scores[m]]
            clean = [scores[m]["clean"] for m in usable]
            deg = [scores[m][cond] for m in usable]
            try:
                out[cond] = {"r_abs": point_biserial(clean, deg), "degenerate": False, "n_models": len(usable)}
            except DegenerateError:
                out[cond] = {"r_abs": None, "degenerate": True, "n_models": len(usable)}
        return out

    if "scores" not in table:
        raise DomainError("score table needs a 'scores' entry")
    rep = {"overall": one(table["scores"])}
    rep["slices"] = {name: one(s) for name, s in sorted(table.get("slices", {}).items())}
    return rep
