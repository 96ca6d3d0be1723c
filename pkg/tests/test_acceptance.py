"""Acceptance suite: one test per criterion, each recorded for the end-of-run summary.

The quantitative criteria share one desk-scale workbench: a 64-256-128-10 MLP
trained on the synthetic 8x8 digits, a 1400-input held-out set split into two
halves, and all six attacks at their default settings.
"""
import json
import time

import numpy as np
import pytest
from scipy import stats

from raid import nn
from raid.attacks import AttackConfig, cw_margin, deepfool, generate_attack_set
from raid.config import ExperimentConfig
from raid.detectors import DetectorSpec, build_pool, pool_scores
from raid.evaluation import NORM_GROUPS, SIX_ATTACKS, aggregate, make_workbench
from raid.fingerprint import ActivationMatrix
from raid.metrics import roc_auc
from raid.rng import PCG32

from conftest import linear_net, record

REPS = 8
RF32 = DetectorSpec("RF", estimators=32)
DT = DetectorSpec("DT")
GROUPS = ("Lstar", "Linf", "L2", "L0")


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    b, info = make_workbench(ExperimentConfig(experiment="per-attack"))
    b.info = dict(info, seconds=round(time.perf_counter() - t0, 1))
    return b


def mean_auc(bench, train, test, spec=RF32, **kw):
    reports = bench.repeat(train, test, spec, REPS, 0, **kw)
    return aggregate(reports)["auc"]["mean"], reports


def test_desk_scale_setup(bench):
    """The quantitative criteria assume this scale; check it rather than trust it."""
    assert bench.net.hidden_count >= 64 and len(bench.net.layers) == 3
    assert bench.info["held_out_accuracy"] >= 0.90
    counts = bench.counts()
    assert counts["train"]["normals"] >= 500 and counts["test"]["normals"] >= 500
    fgsm = counts["train"]["adversarial"]["FGSM"]
    assert fgsm["succeeded"] / fgsm["attempted"] >= 0.8


def test_c01_linf_detection(bench):
    auc, reports = mean_auc(bench, ["Linf"], ["Linf"])
    detail = f"mean AUC {auc:.4f} (>= 0.95), per repetition " + ", ".join(f"{r.auc:.3f}" for r in reports)
    assert record(1, "Linf detection", auc >= 0.95, detail), detail


def test_c02_l2_detection(bench):
    auc, _ = mean_auc(bench, ["L2"], ["L2"])
    detail = f"mean AUC {auc:.4f} (>= 0.80)"
    assert record(2, "L2 detection", auc >= 0.80, detail), detail


def test_c03_cross_norm_asymmetry(bench):
    l2_to_linf, a = mean_auc(bench, ["L2"], ["Linf"])
    linf_to_l2, b = mean_auc(bench, ["Linf"], ["L2"])
    wins = sum(x.auc >= y.auc for x, y in zip(a, b))
    ok = l2_to_linf >= linf_to_l2
    detail = (f"L2->Linf {l2_to_linf:.4f} vs Linf->L2 {linf_to_l2:.4f} over {REPS} repetitions; "
              f"L2->Linf ahead on {wins}/{REPS} individual repetitions")
    assert record(3, "cross-norm asymmetry", ok, detail), detail


def test_c04_neuron_count_trend(bench):
    rows, ok = [], True
    for g in GROUPS:
        means = {k: mean_auc(bench, [g], [g], k=k)[0] for k in (1, 16, 64, 256)}
        good = means[16] >= means[1] and abs(means[64] - means[256]) <= 0.03
        ok &= good
        rows.append(f"{g} k1 {means[1]:.3f} k16 {means[16]:.3f} k64 {means[64]:.3f} kmax {means[256]:.3f}")
    detail = "; ".join(rows)
    assert record(4, "neuron-count trend", ok, detail), detail


def test_k64_beats_k1_every_seed(bench):
    for g in GROUPS:
        _, r1 = mean_auc(bench, [g], [g], k=1)
        _, r64 = mean_auc(bench, [g], [g], k=64)
        assert all(a.auc >= b.auc for a, b in zip(r64, r1)), g


def test_c05_worst_neurons(bench):
    worst = {}
    for g in GROUPS:
        for k in (1, 4):
            # worst-mode selection is deterministic, so a single repetition suffices
            worst[(g, k)] = bench.evaluate([g], [g], RF32, k=k, mode="worst").auc
    ok = all(abs(v - 0.5) <= 0.15 for v in worst.values())
    detail = ", ".join(f"{g}/k{k} {v:.3f}" for (g, k), v in worst.items()) + " (within 0.15 of 0.5)"
    assert record(5, "worst-neuron degradation", ok, detail), detail


def test_c06_pool_parity(bench):
    diffs = {}
    for a in SIX_ATTACKS:
        raid_auc, _ = mean_auc(bench, [a], [a])
        pool_auc, _ = mean_auc(bench, [a], [a], pool_size=32)
        diffs[a] = pool_auc - raid_auc
    ok = all(abs(d) <= 0.03 for d in diffs.values())
    detail = "P-RAID minus RAID: " + ", ".join(f"{a} {d:+.4f}" for a, d in diffs.items()) + " (|.| <= 0.03)"
    assert record(6, "P-RAID parity", ok, detail), detail


def test_c07_ensemble_superiority(bench):
    rows, ok = [], True
    for g in GROUPS:
        rf, _ = mean_auc(bench, [g], [g], RF32)
        dt, _ = mean_auc(bench, [g], [g], DT)
        ok &= rf >= dt
        rows.append(f"{g} RF32 {rf:.3f} DT {dt:.3f}")
    detail = "; ".join(rows)
    assert record(7, "ensemble superiority", ok, detail), detail


def test_c08_gradient_oracle():
    from test_nn import finite_difference_errors
    worst = max(finite_difference_errors(s) for s in range(50))
    detail = f"max relative error {worst:.2e} over 50 cases (< 1e-4)"
    assert record(8, "gradient oracle", worst < 1e-4, detail), detail


def test_c09_auc_oracle():
    mismatches = 0
    for case in range(100):
        rng = np.random.default_rng([9, case])
        n = int(rng.integers(2, 201))
        # coarse scores force plenty of ties
        scores = rng.integers(0, 20, n) / 19
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        pos, neg = scores[labels == 1], scores[labels == 0]
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        mismatches += roc_auc(scores, labels) != wins / (len(pos) * len(neg))
    detail = f"{mismatches} mismatches over 100 score sets"
    assert record(9, "AUC oracle", mismatches == 0, detail), detail


def test_c10_budget_containment(bench):
    total = bad = 0
    for half in ("train", "test"):
        h = bench.halves[half]
        row_of = {int(i): j for j, i in enumerate(h.index)}
        adv = bench.adversarial[half].select(NORM_GROUPS["Linf"])
        orig = h.normals.inputs[[row_of[int(i)] for i in adv.source_index]]
        eps = np.array([bench.attacks[a].eps for a in adv.attack])
        dist = np.abs(adv.inputs - orig).max(axis=1)
        inside = (dist <= eps + 1e-6) & (adv.inputs >= 0).all(axis=1) & (adv.inputs <= 1).all(axis=1)
        total += len(adv)
        bad += int((~inside).sum())
    detail = f"{total - bad}/{total} Linf outputs inside the eps ball and [0, 1]"
    assert record(10, "budget containment", bad == 0 and total > 0, detail), detail


def test_c11_deepfool_closed_form():
    worst, hits = 0.0, 0
    for case in range(50):
        rng = np.random.default_rng([11, case])
        w = rng.normal(size=5)
        x = rng.random(5) * 0.2 + 0.4
        # boundary 0.01-0.1 away from x, so the overshot step stays inside [0, 1]
        b = -w @ x + rng.choice([-1, 1]) * rng.uniform(0.01, 0.1) * np.linalg.norm(w)
        # two-class linear model whose logit difference is w.x + b
        net = linear_net(np.array([np.zeros(5), w]), [0.0, b])
        cfg = AttackConfig("DF", overshoot=0.02)
        res = deepfool(net, x, cfg)
        expected = (1 + cfg.overshoot) * abs(w @ x + b) / np.linalg.norm(w)
        if res.success:
            hits += 1
            worst = max(worst, abs(np.linalg.norm(res.adversarial - x) - expected))
    detail = f"max |norm - closed form| {worst:.2e} over {hits}/50 linear models (<= 1e-6)"
    assert record(11, "DeepFool closed form", worst <= 1e-6 and hits == 50, detail), detail


def test_c12_cw_success_semantics(bench):
    h = bench.halves["test"]
    cw = bench.adversarial["test"].select(["CW"])
    ok = bool((cw_margin(nn.logits(bench.net, cw.inputs), cw.labels) >= 0).all())
    # the confident variant on a subset keeps the suite fast
    sub = h.normals.subset(np.arange(60))
    strong = generate_attack_set(bench.net, sub, [AttackConfig("CW", confidence=0.95, name="CW-0.95")])
    margins = cw_margin(nn.logits(bench.net, strong.inputs), strong.labels)
    ok &= bool((margins >= 0.95).all()) and len(strong) > 0
    detail = (f"kappa 0: {len(cw)} successes all with margin >= 0; "
              f"kappa 0.95: {len(strong)}/60 successes, min margin {margins.min():.3f}")
    assert record(12, "CW success semantics", ok, detail), detail


def test_c13_protocol_hygiene(bench):
    fitted = [f for f in bench._fitted.values()]
    overlaps = 0
    test_sources = set(bench.halves["test"].index.tolist())
    for f in fitted:
        overlaps += len(f.train_sources & test_sources)
    disjoint = not set(bench.halves["train"].index) & test_sources
    ok = disjoint and overlaps == 0 and len(fitted) > 0
    detail = f"{len(fitted)} fitted detectors checked, {overlaps} shared input indices"
    assert record(13, "protocol hygiene", ok, detail), detail


def test_c14_eval_determinism(tmp_path):
    from raid.cli import main
    cfg = tmp_path / "det.ini"
    cfg.write_text("[experiment]\ntrain_data = \"synthetic:digits\"\ntest_data = \"synthetic:digits\"\n"
                   "train_size = 600\ntest_size = 300\nhidden = [32, 16]\nepochs = 8\n"
                   "repetitions = 2\ntrain_attacks = [\"FGSM\", \"DF\"]\ntest_attacks = [\"Linf\"]\n"
                   "k = 16\n\n[detector]\nkind = RF\nestimators = 8\n")
    for name in ("a", "b"):
        assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    a, b = (tmp_path / n / "single.json" for n in ("a", "b"))
    same = a.read_bytes() == b.read_bytes()
    summary = next(iter(json.loads(a.read_text())["results"].values()))["summary"]
    detail = f"two eval runs byte-identical: {same} (AUC {summary['auc']['mean']:.3f})"
    assert record(14, "eval determinism", same, detail), detail


def test_c15_pool_uniformity():
    ids = tuple((0, j) for j in range(40))
    rng = np.random.default_rng(15)
    X = rng.random((200, 40))
    y = (X[:, :5].sum(axis=1) > 2.5).astype(np.int64)
    pool = build_pool(DT, ids, 8, 32, ActivationMatrix(ids, X), y, seed=0)
    _, members = pool_scores(pool, rng.random((10_000, 40)), PCG32(0, 0x9E3779B9))
    counts = np.bincount(members, minlength=32)
    p = stats.chisquare(counts).pvalue
    detail = f"chi-square p = {p:.3f} over 10^4 draws from 32 members (> 0.01)"
    assert record(15, "pool uniformity", p > 0.01, detail), detail
