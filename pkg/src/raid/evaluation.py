"""Data protocol, detection experiments and the result matrices built from them.

The held-out set is shuffled, halved and each half is filtered to the inputs
the network classifies correctly. Every attack is run once on each half. The
first half trains detectors (including the neuron filtering statistics), the
second half tests them. Repetition ``r`` of an experiment reuses the attack
sets and draws a fresh monitor set and detector seed ``base_seed + r``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .attacks import AdversarialSet, AttackConfig, generate_attack_set, noisy_normals
from .config import ExperimentConfig
from .datasets import LabeledDataset, load_dataset
from .detectors import (DECISION_THRESHOLD, DetectorPool, DetectorSpec, build_pool,
                        classifier_sweep, detect_full, pool_scores, train_detector)
from .errors import EmptyDataError, NoAdversarialsError, RaidError
from .fingerprint import ActivationMatrix, filter_inessential, mean_diff, mean_fingerprint, select_monitored
from .metrics import ConfusionCounts, confusion, metrics, roc_auc, roc_curve, summarize
from .rng import PCG32

logger = logging.getLogger(__name__)

NORM_GROUPS: Dict[str, Tuple[str, ...]] = {
    "L0": ("JSMA",),
    "L2": ("DF", "CW"),
    "Linf": ("PGD", "FGSM", "BIM"),
    "Lstar": ("PGD", "FGSM", "BIM", "DF", "CW", "JSMA"),
}
SIX_ATTACKS = NORM_GROUPS["Lstar"]
NOISE_LABEL = "NOISE"
# test-set name: CW adversarials plus noise-perturbed normals
CW_NOISE = "CW-Noise"
# PCG32 stream for per-query pool draws; member selections use streams 0..pool_size-1
QUERY_STREAM = 0x9E3779B9


def resolve_attacks(names: Iterable[str]) -> Tuple[str, ...]:
    """Expand norm-group names into attack labels, keeping first-seen order."""
    out: List[str] = []
    for name in names:
        for label in NORM_GROUPS.get(name, (name,)):
            if label not in out:
                out.append(label)
    return tuple(out)


# --------------------------------------------------------------------- split protocol

@dataclass(frozen=True, eq=False)
class SplitProtocolResult:
    """Correctly classified inputs of one half, with their held-out row indices."""

    normals: LabeledDataset
    index: np.ndarray
    removed: np.ndarray

    def __len__(self):
        return len(self.normals)


def split_protocol(net: nn.Network, held_out: LabeledDataset,
                   seed: int) -> Tuple[SplitProtocolResult, SplitProtocolResult]:
    """Seeded shuffle, halve (first half gets the extra row), drop misclassified inputs."""
    n = len(held_out)
    if n < 2:
        raise EmptyDataError("need at least two held-out inputs to split")
    order = np.random.default_rng(seed).permutation(n)
    cut = math.ceil(n / 2)
    halves = []
    for part in (order[:cut], order[cut:]):
        preds = nn.predict_classes(net, held_out.inputs[part])
        ok = preds == held_out.labels[part]
        keep = part[ok]
        if keep.size == 0:
            raise EmptyDataError("a half has no correctly classified inputs")
        halves.append(SplitProtocolResult(held_out.subset(keep), keep, np.sort(part[~ok])))
    return halves[0], halves[1]


# ------------------------------------------------------------------------ reports

@dataclass(eq=False)
class EvalReport:
    confusion: ConfusionCounts
    accuracy: Optional[float]
    tpr: Optional[float]
    fpr: Optional[float]
    auc: Optional[float]
    seed: int
    config: dict
    hygiene_ok: bool = True
    scores: Optional[np.ndarray] = field(default=None, repr=False)
    truth: Optional[np.ndarray] = field(default=None, repr=False)
    members: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"confusion": self.confusion.to_dict(), "accuracy": self.accuracy, "tpr": self.tpr,
                "fpr": self.fpr, "auc": self.auc, "seed": self.seed, "config": self.config,
                "hygiene_ok": self.hygiene_ok}

    def roc_points(self):
        return roc_curve(self.scores, self.truth)


def aggregate(reports: Sequence[EvalReport]) -> dict:
    """Mean and standard deviation of every metric and count over repetitions."""
    out = {m: summarize([getattr(r, m) for r in reports]) for m in ("accuracy", "tpr", "fpr", "auc")}
    for c in ("tp", "fp", "tn", "fn"):
        out[c] = summarize([getattr(r.confusion, c) for r in reports])
    return out


# ---------------------------------------------------------------------- workbench

@dataclass(frozen=True, eq=False)
class FittedDetector:
    detector: object          # Detector or DetectorPool
    essential: Tuple
    diff: np.ndarray
    train_sources: frozenset
    config: dict
    seed: int


class Workbench:
    """One network, one split and every attack set, shared by many detector runs."""

    def __init__(self, net: nn.Network, held_out: LabeledDataset, attacks: Dict[str, AttackConfig],
                 seed: int = 0, max_normals: Optional[int] = None):
        self.net = net
        self.ids = net.neuron_ids
        self.attacks = dict(attacks)
        self.seed = seed
        train_half, test_half = split_protocol(net, held_out, seed)
        if max_normals is not None:
            train_half, test_half = (
                SplitProtocolResult(h.normals.subset(np.arange(min(len(h), max_normals))),
                                    h.index[:max_normals], h.removed) for h in (train_half, test_half))
        self.halves = {"train": train_half, "test": test_half}
        real = [c for c in self.attacks.values() if c.kind != "NOISE"]
        self.adversarial: Dict[str, AdversarialSet] = {}
        self.noise: Dict[str, Tuple[AdversarialSet, np.ndarray]] = {}
        self.fingerprints: Dict[str, np.ndarray] = {}
        self.normal_rows: Dict[str, np.ndarray] = {}
        for name, half in self.halves.items():
            adv = generate_attack_set(net, half.normals, real, index=half.index) if real \
                else AdversarialSet.empty(net.input_width)
            self.adversarial[name] = adv
            self.fingerprints[name] = nn.hidden_activations(net, adv.inputs) if len(adv) \
                else np.zeros((0, net.hidden_count))
            self.normal_rows[name] = nn.hidden_activations(net, half.normals.inputs)
            noise_cfg = self.attacks.get(NOISE_LABEL)
            if noise_cfg is not None:
                noisy = noisy_normals(net, half.normals, noise_cfg, index=half.index)
                self.noise[name] = (noisy, nn.hidden_activations(net, noisy.inputs)
                                    if len(noisy) else np.zeros((0, net.hidden_count)))
            logger.info("%s half: %d normals, adversarial counts %s", name, len(half),
                        {k: v["succeeded"] for k, v in adv.counts.items()})
        self._fitted: Dict[tuple, FittedDetector] = {}

    # ---- bookkeeping
    def counts(self) -> dict:
        return {name: {"normals": len(h), "removed": int(h.removed.size),
                       "adversarial": self.adversarial[name].counts}
                for name, h in self.halves.items()}

    def excluded(self, half: str) -> List[str]:
        """Attacks without a single success on ``half``."""
        return sorted(k for k, v in self.adversarial[half].counts.items() if v["succeeded"] == 0)

    def _adv_rows(self, half: str, labels: Sequence[str]):
        adv = self.adversarial[half]
        mask = np.isin(adv.attack, list(labels))
        return self.fingerprints[half][mask], adv.source_index[mask]

    def _check_labels(self, labels: Sequence[str], allow_noise: bool = False):
        for label in labels:
            if label == CW_NOISE and allow_noise:
                continue
            if label not in self.attacks or self.attacks[label].kind == "NOISE":
                raise RaidError(f"attack {label!r} is not configured")

    # ---- fitting
    def fit(self, train_attacks: Sequence[str], spec: DetectorSpec, k: int = 64,
            mode: str = "random", threshold: float = 0.5, pool_size: int = 1,
            seed: int = 0) -> FittedDetector:
        """Filter neurons on the training half, select monitors and train.

        ``seed`` drives both the monitor selection and the detector.
        """
        labels = resolve_attacks(train_attacks)
        self._check_labels(labels)
        key = (labels, spec.to_dict().__repr__(), k, mode, threshold, pool_size, seed)
        if key in self._fitted:
            return self._fitted[key]
        adv_rows, adv_src = self._adv_rows("train", labels)
        if len(adv_rows) == 0:
            raise NoAdversarialsError(f"no successful adversarials for {labels} on the training half")
        normal_rows = self.normal_rows["train"]
        diff = mean_diff(mean_fingerprint(ActivationMatrix(self.ids, normal_rows)),
                         mean_fingerprint(ActivationMatrix(self.ids, adv_rows)))
        essential = filter_inessential(diff, threshold, self.ids)
        X = np.concatenate([normal_rows, adv_rows])
        y = np.concatenate([np.zeros(len(normal_rows), np.int64), np.ones(len(adv_rows), np.int64)])
        spec = replace(spec, seed=seed)
        kk = min(k, len(essential)) if mode != "worst" else k
        if pool_size > 1:
            if mode != "random":
                raise RaidError("pools draw their monitor sets at random")
            det = build_pool(spec, essential, kk, pool_size, ActivationMatrix(self.ids, X), y, seed)
            effective_k = det.detectors[0].monitor_set.k
        else:
            ms = select_monitored(essential, kk, mode, diff, seed, self.ids)
            pos = {n: j for j, n in enumerate(self.ids)}
            det = train_detector(spec, X[:, [pos[n] for n in ms.ids]], y, ms)
            effective_k = ms.k
        sources = frozenset(self.halves["train"].index.tolist()) | frozenset(adv_src.tolist())
        config = {"train_attacks": list(labels), "detector": spec.label, "k": effective_k,
                  "k_requested": k, "mode": mode, "filtering_threshold": threshold,
                  "pool_size": pool_size, "essential": len(essential),
                  "excluded_train": [a for a in self.excluded("train") if a in labels]}
        fitted = FittedDetector(det, tuple(essential), diff, sources, config, seed)
        self._fitted[key] = fitted
        return fitted

    # ---- testing
    def test(self, fitted: FittedDetector, test_attacks: Sequence[str]) -> EvalReport:
        labels = resolve_attacks(test_attacks)
        self._check_labels(labels, allow_noise=True)
        with_noise = CW_NOISE in labels
        adv_labels = tuple(dict.fromkeys("CW" if a == CW_NOISE else a for a in labels))
        adv_rows, adv_src = self._adv_rows("test", adv_labels)
        if len(adv_rows) == 0:
            raise NoAdversarialsError(f"no successful adversarials for {adv_labels} on the test half")
        normal_rows = self.normal_rows["test"]
        normal_src = self.halves["test"].index
        if with_noise:
            if "test" not in self.noise:
                raise RaidError("CW-Noise needs a NOISE attack configuration")
            noisy, noisy_rows = self.noise["test"]
            normal_rows = np.concatenate([normal_rows, noisy_rows])
            normal_src = np.concatenate([normal_src, noisy.source_index])
        rows = np.concatenate([normal_rows, adv_rows])
        truth = np.concatenate([np.zeros(len(normal_rows), np.int64), np.ones(len(adv_rows), np.int64)])
        members = None
        if isinstance(fitted.detector, DetectorPool):
            scores, members = pool_scores(fitted.detector, rows, PCG32(fitted.seed, QUERY_STREAM))
        else:
            scores = detect_full(fitted.detector, rows, self.ids)
        test_sources = set(normal_src.tolist()) | set(adv_src.tolist())
        hygiene_ok = not (test_sources & fitted.train_sources)
        if not hygiene_ok:
            raise RaidError("an input index appears in both detector training and testing")
        c = confusion(truth, scores >= DECISION_THRESHOLD)
        acc, tpr, fpr = metrics(c)
        config = dict(fitted.config, test_attacks=list(labels),
                      excluded_test=[a for a in self.excluded("test") if a in adv_labels])
        return EvalReport(c, acc, tpr, fpr, roc_auc(scores, truth), fitted.seed, config,
                          hygiene_ok, scores, truth, members)

    def evaluate(self, train_attacks, test_attacks, spec: DetectorSpec, k=64, mode="random",
                 threshold=0.5, pool_size=1, seed=0) -> EvalReport:
        return self.test(self.fit(train_attacks, spec, k, mode, threshold, pool_size, seed), test_attacks)

    def repeat(self, train_attacks, test_attacks, spec, repetitions: int, base_seed: int,
               threads: int = 1, **kw) -> List[EvalReport]:
        """One report per repetition, seeds ``base_seed + r``, in repetition order."""
        seeds = [base_seed + r for r in range(repetitions)]
        run = lambda s: self.evaluate(train_attacks, test_attacks, spec, seed=s, **kw)  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(run, seeds))
        return [run(s) for s in seeds]


# ---------------------------------------------------------------- experiment matrices

def _cell(bench: Workbench, train, test, spec, repetitions, base_seed, threads=1, **kw) -> dict:
    try:
        reports = bench.repeat(train, test, spec, repetitions, base_seed, threads, **kw)
    except NoAdversarialsError as exc:
        return {"train": list(train), "test": list(test), "error": str(exc)}
    return {"train": list(train), "test": list(test), "summary": aggregate(reports),
            "reports": [r.to_dict() for r in reports]}


PER_ATTACK_ROWS = ("Lstar", "Linf", "L2", "PGD", "FGSM", "BIM", "DF", "CW", "JSMA")


def per_attack_table(bench, spec, repetitions=8, base_seed=0, k=64, threshold=0.5, rows=PER_ATTACK_ROWS, threads=1):
    """Train and test on the same attack or norm group."""
    return {r: _cell(bench, [r], [r], spec, repetitions, base_seed, threads, k=k, threshold=threshold)
            for r in rows if set(resolve_attacks([r])) <= set(bench.attacks)}


def all_to_subset(bench, spec, repetitions=8, base_seed=0, k=64, threshold=0.5, threads=1,
                  columns=("Linf", "L2") + SIX_ATTACKS):
    return {c: _cell(bench, ["Lstar"], [c], spec, repetitions, base_seed, threads, k=k, threshold=threshold)
            for c in columns}


def within_norm_matrix(bench, group, spec, repetitions=8, base_seed=0, k=64, threshold=0.5, threads=1):
    """Train on one attack of a norm group, test on another (diagonal left empty)."""
    members = NORM_GROUPS[group]
    return {a: {b: None if a == b else
                _cell(bench, [a], [b], spec, repetitions, base_seed, threads, k=k, threshold=threshold)
                for b in members} for a in members}


def cross_norm_matrix(bench, spec, repetitions=8, base_seed=0, k=64, threshold=0.5, threads=1,
                      groups=("Lstar", "Linf", "L2", "L0")):
    """Train on all attacks of one norm group and test on another; diagonal left empty."""
    return {a: {b: None if a == b else
                _cell(bench, [a], [b], spec, repetitions, base_seed, threads, k=k, threshold=threshold)
                for b in groups} for a in groups}


def pool_comparison(bench, spec, pool_size=32, repetitions=8, base_seed=0, k=64, threshold=0.5,
                    rows=PER_ATTACK_ROWS, threads=1):
    out = {}
    for r in rows:
        out[r] = {"RAID": _cell(bench, [r], [r], spec, repetitions, base_seed, threads, k=k,
                                threshold=threshold),
                  "P-RAID": _cell(bench, [r], [r], spec, repetitions, base_seed, threads, k=k,
                                  threshold=threshold, pool_size=pool_size)}
    return out


def classifier_comparison(bench, specs: Sequence[DetectorSpec], groups=("Lstar", "Linf", "L2", "L0"),
                          repetitions=8, base_seed=0, k=64, threshold=0.5, threads=1):
    return {s.label: {g: _cell(bench, [g], [g], s, repetitions, base_seed, threads, k=k, threshold=threshold)
                      for g in groups} for s in specs}


def auxiliary_tests(bench, spec, repetitions=8, base_seed=0, k=64, threshold=0.5, threads=1):
    """Train on all six attacks, test on CW-0.95 and on CW plus noisy normals."""
    out = {}
    for col in ("CW-0.95", CW_NOISE):
        needed = "CW-0.95" if col == "CW-0.95" else NOISE_LABEL
        if needed in bench.attacks:
            out[col] = _cell(bench, ["Lstar"], [col], spec, repetitions, base_seed, threads, k=k,
                             threshold=threshold)
    return out


def neuron_sweep(bench, spec, groups=("Lstar", "Linf", "L2", "L0"), ks=(1, 4, 16, 64, 256),
                 modes=("random", "best", "worst"), repetitions=8, base_seed=0, threshold=0.5,
                 fixed_repetitions=1, threads=1):
    """AUC against the number of monitored neurons.

    ``k`` is clamped to the number of neurons available to the mode. Best and
    worst selections are deterministic, so they run ``fixed_repetitions``
    times only.
    """
    table = {}
    for mode in modes:
        reps = repetitions if mode == "random" else fixed_repetitions
        table[mode] = {g: {str(k): _cell(bench, [g], [g], spec, reps, base_seed, threads, k=k,
                                         mode=mode, threshold=threshold)
                           for k in ks} for g in groups}
    return table


# ------------------------------------------------------------------------- rendering

def _fmt(summary, metric="auc") -> str:
    if summary is None:
        return "--"
    if "error" in summary:
        return "n/a"
    s = summary["summary"][metric]
    if s["mean"] is None:
        return "n/a"
    return f"{s['mean']:.2f} ± {s['std']:.2f}"


def format_table(title: str, row_names: Sequence[str], col_names: Sequence[str], cell) -> str:
    """Aligned text table; ``cell(row, col)`` returns the string for one entry."""
    body = [[str(r)] + [cell(r, c) for c in col_names] for r in row_names]
    header = [""] + list(map(str, col_names))
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    line = lambda row: "  ".join(v.ljust(w) if i == 0 else v.rjust(w)  # noqa: E731
                                 for i, (v, w) in enumerate(zip(row, widths)))
    return "\n".join([title, line(header), "-" * len(line(header))] + [line(r) for r in body]) + "\n"


METRIC_COLUMNS = ("accuracy", "tpr", "fpr", "auc", "tp", "fp", "tn", "fn")


def render(kind: str, result: dict) -> str:
    if kind in ("per-attack", "single", "all-to-subset", "auxiliary"):
        rows = list(result)
        return format_table(kind, rows, METRIC_COLUMNS, lambda r, c: _fmt(result[r], c))
    if kind in ("cross-norm", "within-norm"):
        parts = []
        for name, matrix in (result.items() if kind == "within-norm" else [("AUC", result)]):
            rows = list(matrix)
            parts.append(format_table(f"{kind} {name} (rows: train, columns: test)", rows, rows,
                                      lambda r, c: _fmt(matrix[r][c])))
        return "\n".join(parts)
    if kind == "pool":
        return format_table("RAID vs P-RAID (AUC)", list(result), ("RAID", "P-RAID"),
                            lambda r, c: _fmt(result[r][c]))
    if kind == "classifiers":
        specs = list(result)
        groups = list(next(iter(result.values()))) if result else []
        return format_table("AUC by detector", specs, groups, lambda r, c: _fmt(result[r][c]))
    if kind == "sweep":
        parts = []
        for mode, table in result.items():
            groups = list(table)
            ks = list(next(iter(table.values()))) if table else []
            parts.append(format_table(f"neuron sweep ({mode}), AUC", groups, ks,
                                      lambda r, c: _fmt(table[r][c])))
        return "\n".join(parts)
    raise ValueError(kind)


# ------------------------------------------------------------------------- driver

@dataclass(eq=False)
class ExperimentResult:
    kind: str
    payload: dict
    text: str
    reports: List[EvalReport] = field(default_factory=list)


def needed_attacks(cfg: ExperimentConfig) -> Tuple[str, ...]:
    """Attack labels an experiment actually uses (others are not generated)."""
    kind = cfg.experiment
    if kind == "single":
        names = resolve_attacks(cfg.train_attacks) + resolve_attacks(cfg.test_attacks)
        names = tuple("CW" if n == CW_NOISE else n for n in names)
        if CW_NOISE in resolve_attacks(cfg.test_attacks):
            names += (NOISE_LABEL,)
    elif kind == "auxiliary":
        names = SIX_ATTACKS + ("CW-0.95", NOISE_LABEL)
    else:
        names = SIX_ATTACKS
    missing = [n for n in names if n not in cfg.attacks]
    if missing:
        raise RaidError(f"attacks {missing} are not configured")
    return tuple(dict.fromkeys(names))


def prepare_network(cfg: ExperimentConfig) -> Tuple[nn.Network, dict]:
    """Load ``cfg.network`` or train a fresh network on the training data."""
    if cfg.network:
        return nn.load_network(cfg.network), {"network": cfg.network}
    data = load_dataset(cfg.train_data, cfg.train_format, cfg.train_labels, cfg.train_size, cfg.data_seed)
    net = nn.init_network((data.width,) + tuple(cfg.hidden) + (data.class_count,), seed=cfg.seed)
    net, rep = nn.train(net, data, nn.TrainConfig(cfg.epochs, cfg.batch_size, cfg.learning_rate,
                                                   cfg.optimizer, cfg.seed))
    return net, {"network": "trained", "train_accuracy": rep.train_accuracy}


def load_held_out(cfg: ExperimentConfig) -> LabeledDataset:
    # a synthetic held-out set uses its own seed so it never repeats the training draws
    seed = cfg.data_seed + 1 if cfg.test_data.startswith("synthetic:") else cfg.data_seed
    return load_dataset(cfg.test_data, cfg.test_format, cfg.test_labels, cfg.test_size, seed)


def make_workbench(cfg: ExperimentConfig, net: Optional[nn.Network] = None) -> Tuple[Workbench, dict]:
    info = {}
    if net is None:
        net, info = prepare_network(cfg)
    held_out = load_held_out(cfg)
    info["held_out_accuracy"] = nn.accuracy(net, held_out.inputs, held_out.labels)
    attacks = {n: cfg.attacks[n] for n in needed_attacks(cfg)}
    return Workbench(net, held_out, attacks, seed=cfg.seed, max_normals=cfg.max_normals), info


def run_experiment(cfg: ExperimentConfig, bench: Optional[Workbench] = None) -> ExperimentResult:
    """Run the experiment named by ``cfg.experiment`` end to end.

    Repetition ``r`` uses seed ``cfg.seed + r``. The payload holds no
    timestamps, so equal configs give equal JSON.
    """
    info = {}
    if bench is None:
        bench, info = make_workbench(cfg)
    kind = cfg.experiment
    common = dict(repetitions=cfg.repetitions, base_seed=cfg.seed, threads=cfg.threads)
    spec = cfg.detector
    reports: List[EvalReport] = []
    if kind == "single":
        reports = bench.repeat(cfg.train_attacks, cfg.test_attacks, spec, cfg.repetitions, cfg.seed,
                               cfg.threads, k=cfg.k, mode=cfg.selection,
                               threshold=cfg.filtering_threshold, pool_size=cfg.pool_size)
        label = "/".join(cfg.train_attacks) + " -> " + "/".join(cfg.test_attacks)
        result = {label: {"train": list(cfg.train_attacks), "test": list(cfg.test_attacks),
                          "summary": aggregate(reports), "reports": [r.to_dict() for r in reports]}}
    elif kind == "per-attack":
        result = (pool_comparison(bench, spec, cfg.pool_size, k=cfg.k, threshold=cfg.filtering_threshold,
                                  **common) if cfg.pool_size > 1 else
                  per_attack_table(bench, spec, k=cfg.k, threshold=cfg.filtering_threshold, **common))
        if cfg.pool_size > 1:
            kind = "pool"
    elif kind == "pool":
        result = pool_comparison(bench, spec, max(cfg.pool_size, 2), k=cfg.k,
                                 threshold=cfg.filtering_threshold, **common)
    elif kind == "all-to-subset":
        result = all_to_subset(bench, spec, k=cfg.k, threshold=cfg.filtering_threshold, **common)
    elif kind == "within-norm":
        result = {g: within_norm_matrix(bench, g, spec, k=cfg.k, threshold=cfg.filtering_threshold, **common)
                  for g in ("Linf", "L2")}
    elif kind == "cross-norm":
        result = cross_norm_matrix(bench, spec, k=cfg.k, threshold=cfg.filtering_threshold,
                                   groups=cfg.groups, **common)
    elif kind == "classifiers":
        result = classifier_comparison(bench, classifier_sweep(spec.seed), groups=cfg.groups, k=cfg.k,
                                       threshold=cfg.filtering_threshold, **common)
    elif kind == "auxiliary":
        result = auxiliary_tests(bench, spec, k=cfg.k, threshold=cfg.filtering_threshold, **common)
    elif kind == "sweep":
        result = neuron_sweep(bench, spec, groups=cfg.groups, ks=cfg.neurons, modes=cfg.sweep_modes,
                              threshold=cfg.filtering_threshold, **common)
    else:
        raise RaidError(f"unknown experiment {kind!r}")
    payload = {"version": 1, "experiment": kind, "config": cfg.to_dict(), "network": info,
               "split": bench.counts(),
               "excluded_attacks": {"train": bench.excluded("train"), "test": bench.excluded("test")},
               "results": result}
    return ExperimentResult(kind, payload, render(kind, result), reports)


def roc_csv(report: EvalReport) -> str:
    """``fpr,tpr,threshold`` rows at every distinct score threshold."""
    fpr, tpr, thr = report.roc_points()
    lines = ["fpr,tpr,threshold"]
    lines += [f"{a!r},{b!r},{c!r}" for a, b, c in zip(fpr.tolist(), tpr.tolist(), thr.tolist())]
    return "\n".join(lines) + "\n"
