import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from degkit.errors import DegenerateError, DomainError
from degkit.metrics import (accuracy, correlation_report, evaluate, list_mra, mra, parse_answer, point_biserial,
                            score_item)

ALLOWED = {i / 10 for i in range(11)}


# --- parsing -----------------------------------------------------------------

@pytest.mark.parametrize("raw,fmt,expected", [
    ("<answer>yes</answer>", "yes_no", "yes"),
    ("No, it is not.", "yes_no", "no"),
    ("The answer is B.", "mcq", "B"),
    ("<answer>C</answer>", "mcq", "C"),
    ("I pick (d)", "mcq", "D"),
    ("Option A looks right", "mcq", "A"),
    ("<answer>3.5</answer>", "number", 3.5),
    ("about 2 meters", "number", 2.0),
    ("<think>maybe 4</think><answer>1.25</answer>", "number", 1.25),
])
def test_parse_fixture_corpus(raw, fmt, expected):
    p = parse_answer(raw, fmt)
    assert p.ok and p.value == expected


def test_parse_triple_sorts_and_flags():
    p = parse_answer("[0.30, 0.10, 0.20]", "triple")
    assert p.value == (0.10, 0.20, 0.30) and p.status == "resorted"
    q = parse_answer("<answer>[0.1, 0.2, 0.3]</answer>", "triple")
    assert q.status == "ok"


@pytest.mark.parametrize("raw,fmt", [("no idea", "mcq"), ("maybe", "yes_no"), ("many", "number"),
                                     ("[1, 2]", "triple"), ("", "number")])
def test_unparseable_scores_zero(raw, fmt):
    assert not parse_answer(raw, fmt).ok
    assert score_item({"format": fmt, "answer": 1.0 if fmt == "number" else "A"}, raw) == 0.0


# --- accuracy ----------------------------------------------------------------

def _mc(i, ans="A"):
    return {"id": f"q{i}", "format": "mcq", "answer": ans, "options": {"A": "x", "B": "y", "C": "z", "D": "w"}}


def test_accuracy_all_correct_and_half():
    items = [_mc(i) for i in range(10)]
    assert accuracy(items, {f"q{i}": "A" for i in range(10)}) == 1.0
    assert accuracy(items, {f"q{i}": "A" if i < 5 else "B" for i in range(10)}) == 0.5
    assert accuracy(items, {}) == 0.0


def test_accuracy_empty_is_error():
    with pytest.raises(DomainError):
        accuracy([], {})


# --- MRA ---------------------------------------------------------------------

def test_mra_exact_match():
    assert mra(2.0, 2.0) == 1.0


def test_mra_relative_error_030():
    assert mra(1.3, 1.0) == 0.4
    assert mra(0.7, 1.0) == 0.4
    assert mra(13, 10) == 0.4


def test_mra_half_or_worse_is_zero():
    assert mra(1.5, 1.0) == 0.0
    assert mra(3.0, 1.0) == 0.0
    assert mra(0.0, 1.0) == 0.0


def test_mra_rejects_nonpositive_gt():
    with pytest.raises(DomainError):
        mra(1.0, 0.0)


@given(st.floats(0, 100, allow_nan=False), st.floats(0.01, 100))
def test_mra_image_and_oracle(pred, gt):
    v = mra(pred, gt)
    assert v in ALLOWED
    assert v == oracles.mra_bruteforce(pred, gt)


def test_list_mra_examples():
    assert list_mra([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 1.0
    assert list_mra([0.1, 0.4, 0.6], [0.1, 0.2, 0.3]) == pytest.approx(1 / 3)
    assert list_mra([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]) == 0.0
    score, flag = list_mra([0.3, 0.1, 0.2], [0.1, 0.2, 0.3], return_flag=True)
    assert score == 1.0 and flag


# --- point-biserial ----------------------------------------------------------

def test_point_biserial_unchanged_scores_is_zero():
    assert point_biserial([60, 50], [60, 50]) == 0.0


def test_point_biserial_perfect_separation():
    assert point_biserial([1, 1], [0, 0]) == 1.0


def test_point_biserial_degenerate():
    with pytest.raises(DegenerateError):
        point_biserial([5, 5], [5, 5])
    with pytest.raises(DomainError):
        point_biserial([1], [0])


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=2, max_size=12))
def test_point_biserial_matches_pearson(pairs):
    clean = [a for a, _ in pairs]
    deg = [b for _, b in pairs]
    if np.ptp(clean + deg) < 1e-6:
        return
    x = [0.0] * len(clean) + [1.0] * len(deg)
    assert point_biserial(clean, deg) == pytest.approx(abs(oracles.pearson(x, clean + deg)), abs=1e-9)


def test_point_biserial_affine_invariance():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(2, 15))
        clean, deg = rng.uniform(0, 100, m), rng.uniform(0, 100, m)
        a = rng.uniform(0.1, 10) * rng.choice([-1, 1])
        b = rng.uniform(-50, 50)
        r0 = point_biserial(clean, deg)
        assert 0.0 <= r0 <= 1.0
        assert abs(point_biserial(a * clean + b, a * deg + b) - r0) <= 1e-10


# --- reports -----------------------------------------------------------------

def test_evaluate_report():
    items = [
        {"id": "a", "question_type": "object_counting", "format": "number", "answer": 10, "task_group": "object_centric"},
        {"id": "b", "question_type": "camera_rotation", "format": "mcq", "answer": "B",
         "options": {"A": "x", "B": "y", "C": "z", "D": "w"}, "task_group": "camera_centric"},
    ]
    rep = evaluate(items, {"clean": {"a": "13", "b": "B"}, "haze": {"a": "10", "b": "garbage"}})
    clean = rep["conditions"]["clean"]
    assert clean["items"]["a"] == 0.4 and clean["items"]["b"] == 1.0
    assert clean["overall"] == pytest.approx(0.7)
    assert clean["by_format"] == {"mcq": 1.0, "number": 0.4}
    haze = rep["conditions"]["haze"]
    assert haze["n_unparseable"] == 1 and haze["accuracy"] == 0.0 and haze["mra"] == 1.0


def test_correlation_report_flags_degenerate():
    table = {"scores": {"m1": {"clean": 50, "haze": 40, "jpeg": 50}, "m2": {"clean": 60, "haze": 45, "jpeg": 50}},
             "slices": {"mcq": {"m1": {"clean": 1, "haze": 1}, "m2": {"clean": 1, "haze": 1}}}}
    rep = correlation_report(table)
    assert rep["overall"]["haze"]["r_abs"] == pytest.approx(
        abs(oracles.pearson([0, 0, 1, 1], [50, 60, 40, 45])), abs=1e-12)
    assert rep["slices"]["mcq"]["haze"]["degenerate"] and rep["slices"]["mcq"]["haze"]["r_abs"] is None
