import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raid.errors import RaidError
from raid.metrics import ConfusionCounts, confusion, metrics, roc_auc, roc_curve, summarize


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_confusion_examples():
    c = confusion([1, 1, 0, 0], [1, 0, 0, 1])
    assert (c.tp, c.fn, c.tn, c.fp) == (1, 1, 1, 1)
    c = confusion([1, 0, 1], [1, 0, 1])
    assert c.fp == 0 and c.fn == 0
    with pytest.raises(RaidError):
        confusion([1, 0], [1])


def test_confusion_vs_tally(rng):
    t = rng.integers(0, 2, 10_000)
    p = rng.integers(0, 2, 10_000)
    tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for a, b in zip(t.tolist(), p.tolist()):
        tally[("t" if a == b else "f") + ("p" if b == 1 else "n")] += 1
    assert confusion(t, p).to_dict() == tally
    assert sum(tally.values()) == confusion(t, p).total


def test_metric_formulas():
    assert metrics(ConfusionCounts(tp=9, fp=0, tn=10, fn=1)) == (19 / 20, 0.9, 0.0)
    acc, tpr, fpr = metrics(ConfusionCounts(tp=0, fp=2, tn=3, fn=0))
    assert tpr is None and fpr == 0.4
    # the reference row of a perfect detector
    assert metrics(ConfusionCounts(tp=50, fp=0, tn=50, fn=0)) == (1.0, 1.0, 0.0)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert roc_auc([0.9, 0.4, 0.1, 0.6], [1, 1, 0, 0]) == 0.75
    with pytest.raises(RaidError):
        roc_auc([0.1, 0.2], [1, 1])


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_auc_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    # coarse grid so ties are common
    scores = rng.integers(0, 12, n) / 11 if seed % 2 else rng.random(n)
    assert roc_auc(scores, labels) == brute_auc(scores.tolist(), labels.tolist())


@given(st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_auc_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 20, 60) / 19
    y = rng.integers(0, 2, 60)
    y[:2] = [0, 1]
    assert roc_auc(s, y) == roc_auc(np.exp(3 * s) + 7, y)


def test_roc_curve_endpoints(rng):
    s, y = rng.random(50), np.r_[np.zeros(25), np.ones(25)]
    fpr, tpr, thr = roc_curve(s, y)
    assert (fpr[0], tpr[0]) == (0, 0) and (fpr[-1], tpr[-1]) == (1, 1)
    assert np.isinf(thr[0]) and (np.diff(fpr) >= 0).all() and (np.diff(tpr) >= 0).all()
    # trapezoid area equals the ranking AUC
    assert np.trapezoid(tpr, fpr) == pytest.approx(roc_auc(s, y), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=16))
@settings(max_examples=100, deadline=None)
def test_summary_two_pass(values):
    s = summarize(values)
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    assert s["mean"] == pytest.approx(mean, abs=1e-12)
    assert s["std"] == pytest.approx(math.sqrt(var), abs=1e-9)
    assert s["std"] >= 0
    assert (s["std"] == 0) == (len(set(values)) == 1)


def test_summary_absent_values():
    s = summarize([None, None])
    assert s["mean"] is None and s["std"] is None
    assert summarize([0.5, None])["mean"] == 0.5
