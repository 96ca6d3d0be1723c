import json
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raid import nn
from raid.attacks import AttackConfig
from raid.datasets import LabeledDataset
from raid.detectors import DetectorSpec, DetectorPool
from raid.errors import EmptyDataError, NoAdversarialsError, RaidError
from raid.evaluation import (NORM_GROUPS, EvalReport, Workbench, aggregate, cross_norm_matrix,
                             neuron_sweep, render, resolve_attacks, split_protocol, within_norm_matrix)
from raid.metrics import ConfusionCounts, metrics

from conftest import linear_net


def threshold_data(n, flip=()):
    """1-D inputs with label 1 iff x > 0.5, labels flipped at ``flip``."""
    x = (np.arange(n) + 0.5) / n
    y = (x > 0.5).astype(np.int64)
    y[list(flip)] ^= 1
    return LabeledDataset(x[:, None], y, 2)


# logits (0, 2x - 1): predicts 1 iff x > 0.5
STEP = linear_net([[0.0], [2.0]], [0.0, -1.0])


def test_norm_groups_fixed():
    assert NORM_GROUPS["Linf"] == ("PGD", "FGSM", "BIM")
    assert NORM_GROUPS["L2"] == ("DF", "CW")
    assert NORM_GROUPS["L0"] == ("JSMA",)
    assert NORM_GROUPS["Lstar"] == ("PGD", "FGSM", "BIM", "DF", "CW", "JSMA")
    assert resolve_attacks(["FGSM", "Linf"]) == ("FGSM", "PGD", "BIM")


@pytest.mark.parametrize("n", [10, 11, 101])
def test_split_perfect_net(n):
    a, b = split_protocol(STEP, threshold_data(n), seed=4)
    assert (len(a), len(b)) == ((n + 1) // 2, n // 2)
    assert not set(a.index) & set(b.index)
    assert a.removed.size == b.removed.size == 0


def test_split_removes_planted_errors():
    flip = [3, 17, 40, 41, 88]
    data = threshold_data(100, flip)
    a, b = split_protocol(STEP, data, seed=7)
    assert sorted(np.r_[a.removed, b.removed].tolist()) == flip
    for half in (a, b):
        assert np.array_equal(half.normals.labels, data.labels[half.index])
        assert (nn.predict_classes(STEP, half.normals.inputs) == half.normals.labels).all()
    assert len(a) + len(b) == 95


def test_split_errors_and_seed():
    with pytest.raises(EmptyDataError):
        split_protocol(STEP, threshold_data(1), 0)
    # every label wrong: both halves empty
    data = threshold_data(10)
    bad = LabeledDataset(data.inputs, 1 - data.labels, 2)
    with pytest.raises(EmptyDataError):
        split_protocol(STEP, bad, 0)
    a1, _ = split_protocol(STEP, threshold_data(50), 1)
    a2, _ = split_protocol(STEP, threshold_data(50), 1)
    a3, _ = split_protocol(STEP, threshold_data(50), 2)
    assert np.array_equal(a1.index, a2.index) and not np.array_equal(a1.index, a3.index)


FAST_ATTACKS = {
    "PGD": AttackConfig("PGD", max_iter=10, alpha=0.05),
    "FGSM": AttackConfig("FGSM"),
    "BIM": AttackConfig("BIM", max_iter=10, alpha=0.05),
    "DF": AttackConfig("DF", max_iter=20),
    "CW": AttackConfig("CW", max_iter=30, binary_search_steps=2, initial_const=1.0, learning_rate=0.05),
    "JSMA": AttackConfig("JSMA", gamma=0.3),
    "NOISE": AttackConfig("NOISE"),
}


@pytest.fixture(scope="module")
def bench(digits_net):
    net, held_out = digits_net
    return Workbench(net, held_out, FAST_ATTACKS, seed=0, max_normals=60)


SPEC = DetectorSpec("RF", estimators=8)


def test_workbench_counts(bench):
    c = bench.counts()
    assert c["train"]["normals"] == c["test"]["normals"] == 60
    for half in ("train", "test"):
        for label, v in c[half]["adversarial"].items():
            assert 0 <= v["succeeded"] <= v["attempted"] == 60


def test_report_invariants_and_recompute(bench):
    r = bench.evaluate(["Linf"], ["Linf"], SPEC, k=16, seed=3)
    c = r.confusion
    assert c.tp + c.fp + c.tn + c.fn == len(r.scores) == len(r.truth)
    acc, tpr, fpr = metrics(ConfusionCounts(**json.loads(json.dumps(r.to_dict()))["confusion"]))
    assert (acc, tpr, fpr) == (r.accuracy, r.tpr, r.fpr)
    assert acc == (c.tp + c.tn) / (c.tp + c.fp + c.tn + c.fn)
    assert tpr == c.tp / (c.tp + c.fn) and fpr == c.fp / (c.fp + c.tn)
    assert all(0 <= v <= 1 for v in (acc, tpr, fpr, r.auc))
    assert r.config["train_attacks"] == ["PGD", "FGSM", "BIM"] and r.config["k"] == 16
    assert r.hygiene_ok


def test_repeat_determinism(bench):
    a = [r.to_dict() for r in bench.repeat(["FGSM"], ["FGSM"], SPEC, 2, 5, k=8)]
    bench._fitted.clear()
    b = [r.to_dict() for r in bench.repeat(["FGSM"], ["FGSM"], SPEC, 2, 5, k=8)]
    threaded = [r.to_dict() for r in bench.repeat(["FGSM"], ["FGSM"], SPEC, 2, 5, threads=2, k=8)]
    assert a == b == threaded
    assert [r["seed"] for r in a] == [5, 6]


def test_hygiene_violation_detected(bench):
    fitted = bench.fit(["FGSM"], SPEC, k=8, seed=0)
    leaked = type(fitted)(fitted.detector, fitted.essential, fitted.diff,
                          fitted.train_sources | {int(bench.halves["test"].index[0])},
                          fitted.config, fitted.seed)
    with pytest.raises(RaidError, match="both"):
        bench.test(leaked, ["FGSM"])
    assert not set(bench.halves["train"].index) & set(bench.halves["test"].index)


def test_aggregate_two_pass(bench):
    reports = bench.repeat(["Linf"], ["L2"], SPEC, 3, 0, k=8)
    agg = aggregate(reports)
    aucs = [r.auc for r in reports]
    mean = sum(aucs) / len(aucs)
    assert agg["auc"]["mean"] == pytest.approx(mean, abs=1e-15)
    assert agg["auc"]["std"] == pytest.approx(statistics.pstdev(aucs), abs=1e-12)
    assert agg["tp"]["mean"] == pytest.approx(np.mean([r.confusion.tp for r in reports]))


def test_cross_norm_layout(bench):
    out = cross_norm_matrix(bench, SPEC, repetitions=1, k=8)
    groups = ["Lstar", "Linf", "L2", "L0"]
    assert list(out) == groups and all(list(out[g]) == groups for g in groups)
    for a in groups:
        for b in groups:
            assert (out[a][b] is None) == (a == b)
    text = render("cross-norm", out)
    assert all(g in text for g in groups)
    w = within_norm_matrix(bench, "L2", SPEC, repetitions=1, k=8)
    assert w["DF"]["DF"] is None and "summary" in w["DF"]["CW"]


def test_sweep_clamp_and_worst(bench):
    out = neuron_sweep(bench, SPEC, groups=("Linf",), ks=(1, 4096), modes=("random", "worst"),
                       repetitions=1)
    big = out["random"]["Linf"]["4096"]["reports"][0]["config"]
    assert big["k"] == big["essential"] == 24   # 48 hidden neurons, half filtered out
    assert big["k_requested"] == 4096
    worst = out["worst"]["Linf"]["4096"]["reports"][0]["config"]
    assert worst["k"] == 24 and worst["mode"] == "worst"
    fit = bench.fit(["Linf"], SPEC, k=5, mode="worst", seed=0)
    ess = set(fit.essential)
    assert not ess & set(fit.detector.monitor_set.ids)


def test_pool_fit_and_members(bench):
    r = bench.evaluate(["FGSM"], ["FGSM"], SPEC, k=8, pool_size=4, seed=1)
    fitted = bench.fit(["FGSM"], SPEC, k=8, pool_size=4, seed=1)
    assert isinstance(fitted.detector, DetectorPool) and len(fitted.detector.detectors) == 4
    assert r.members.min() >= 0 and r.members.max() < 4
    with pytest.raises(RaidError):
        bench.fit(["FGSM"], SPEC, k=8, pool_size=4, mode="best")


def test_cw_noise_and_errors(bench):
    r = bench.evaluate(["Lstar"], ["CW-Noise"], SPEC, k=8)
    n_normal = int((r.truth == 0).sum())
    assert n_normal == 60 + bench.noise["test"][0].counts["NOISE"]["kept"]
    with pytest.raises(RaidError):
        bench.evaluate(["XYZ"], ["FGSM"], SPEC)


def test_no_adversarials_reported(digits_net):
    net, held_out = digits_net
    b = Workbench(net, held_out, {"FGSM": AttackConfig("FGSM", eps=0.0)}, max_normals=20)
    assert b.excluded("train") == ["FGSM"]
    with pytest.raises(NoAdversarialsError):
        b.fit(["FGSM"], SPEC)


# AUCs are pair-count ratios, so draw them as such
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=8))
@settings(max_examples=50)
def test_std_zero_iff_identical(counts):
    aucs = [c / 10_000 for c in counts]
    reports = [EvalReport(ConfusionCounts(1, 0, 1, 0), 1.0, 1.0, 0.0, a, i, {}) for i, a in enumerate(aucs)]
    s = aggregate(reports)["auc"]["std"]
    assert s >= 0
    assert (s == 0) == (len(set(aucs)) == 1)
