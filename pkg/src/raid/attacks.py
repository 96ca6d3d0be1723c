"""White-box attacks on :class:`raid.nn.Network` plus the Gaussian-noise control.

Every kernel works on a batch ``(n, D)`` of inputs in ``[0, 1]`` with their
true labels and returns an :class:`AttackBatch`. Randomness (PGD start, JSMA
target, noise) is drawn from a per-input stream seeded by ``(cfg.seed,
index)`` where ``index`` is the input's provenance index, so results do not
depend on how inputs are batched.

Success always means the network's prediction on the output differs from the
true label; CW additionally requires the logit margin to reach ``confidence``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import nn
from ._io import PathLike, dump_json, write_atomic
from .datasets import LabeledDataset
from .errors import EmptyDataError, FormatError, InputShapeError, RaidError

ATTACK_KINDS = ("PGD", "FGSM", "BIM", "DF", "CW", "JSMA", "NOISE")

NORM_OF_KIND = {"PGD": "Linf", "FGSM": "Linf", "BIM": "Linf", "DF": "L2", "CW": "L2", "JSMA": "L0"}


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    eps: float = 0.3
    alpha: float = 0.01
    max_iter: int = 100
    confidence: float = 0.0
    gamma: float = 1.0
    theta: float = 1.0
    overshoot: float = 0.02
    noise_mean: float = 0.0
    noise_std: float = 0.2
    learning_rate: float = 0.01
    binary_search_steps: int = 9
    initial_const: float = 0.01
    seed: int = 0
    name: Optional[str] = None

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.confidence < 0:
            raise ValueError("confidence must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @property
    def norm(self) -> Optional[str]:
        return NORM_OF_KIND.get(self.kind)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "AttackConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise FormatError(f"unknown attack config keys {sorted(unknown)}")
        return cls(**obj)


def default_attacks(seed: int = 0) -> Dict[str, AttackConfig]:
    """The six attacks at their default settings, plus CW-0.95 and the noise control."""
    cfgs = [AttackConfig(k, seed=seed) for k in ("PGD", "FGSM", "BIM", "DF", "CW", "JSMA")]
    cfgs.append(AttackConfig("CW", confidence=0.95, seed=seed, name="CW-0.95"))
    cfgs.append(AttackConfig("NOISE", seed=seed))
    return {c.label: c for c in cfgs}


@dataclass(frozen=True)
class AttackResult:
    adversarial: np.ndarray
    success: bool
    iterations_used: int
    distortion: Dict[str, float]


@dataclass(eq=False)
class AttackBatch:
    original: np.ndarray
    adversarial: np.ndarray
    success: np.ndarray
    iterations: np.ndarray

    def distortions(self) -> Dict[str, np.ndarray]:
        delta = self.adversarial - self.original
        return {
            "linf": np.abs(delta).max(axis=1, initial=0.0),
            "l2": np.sqrt((delta ** 2).sum(axis=1)),
            "l0": (delta != 0).sum(axis=1).astype(np.float64),
        }

    def result(self, i: int) -> AttackResult:
        dist = {k: float(v[i]) for k, v in self.distortions().items()}
        return AttackResult(self.adversarial[i].copy(), bool(self.success[i]),
                            int(self.iterations[i]), dist)


def _rows_rng(cfg: AttackConfig, index: np.ndarray) -> List[np.random.Generator]:
    return [np.random.default_rng([int(cfg.seed), int(i)]) for i in index]


def _misclassified(net: nn.Network, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return nn.predict_classes(net, X) != labels


# ---------------------------------------------------------------- L-infinity family

def _fgsm(net, X, labels, cfg, index):
    _, grad = nn.loss_gradient(net, X, labels)
    adv = np.clip(X + cfg.eps * np.sign(grad), 0.0, 1.0)
    return AttackBatch(X, adv, _misclassified(net, adv, labels), np.ones(len(X), dtype=np.int64))


def _iterate_linf(net, X, start, labels, cfg):
    lo, hi = X - cfg.eps, X + cfg.eps
    adv = start.copy()
    iters = np.zeros(len(X), dtype=np.int64)
    success = _misclassified(net, adv, labels)
    for _ in range(cfg.max_iter):
        active = np.flatnonzero(~success)
        if active.size == 0:
            break
        _, grad = nn.loss_gradient(net, adv[active], labels[active])
        step = adv[active] + cfg.alpha * np.sign(grad)
        adv[active] = np.clip(np.clip(step, lo[active], hi[active]), 0.0, 1.0)
        iters[active] += 1
        success[active] = _misclassified(net, adv[active], labels[active])
    return AttackBatch(X, adv, success, iters)


def _bim(net, X, labels, cfg, index):
    return _iterate_linf(net, X, X.copy(), labels, cfg)


def _pgd(net, X, labels, cfg, index):
    lo, hi = np.maximum(X - cfg.eps, 0.0), np.minimum(X + cfg.eps, 1.0)
    start = np.empty_like(X)
    for r, rng in enumerate(_rows_rng(cfg, index)):
        start[r] = rng.uniform(lo[r], hi[r])
    return _iterate_linf(net, X, start, labels, cfg)


# ----------------------------------------------------------------------- DeepFool

def _deepfool(net, X, labels, cfg, index):
    n = len(X)
    adv = X.copy()
    r_tot = np.zeros_like(X)
    iters = np.zeros(n, dtype=np.int64)
    success = _misclassified(net, X, labels)
    stuck = np.zeros(n, dtype=bool)
    for _ in range(cfg.max_iter):
        active = np.flatnonzero(~success & ~stuck)
        if active.size == 0:
            break
        lab = labels[active]
        z, jac = nn.logit_jacobian(net, adv[active])
        rows = np.arange(active.size)
        f = z - z[rows, lab][:, None]
        w = jac - jac[rows, lab][:, None, :]
        if not np.isfinite(w).all():
            raise RaidError("DeepFool encountered non-finite gradients")
        norm = np.sqrt((w ** 2).sum(axis=2))
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.where(norm > 0, np.abs(f) / norm, np.inf)
        dist[rows, lab] = np.inf
        best = np.argmin(dist, axis=1)
        dead = ~np.isfinite(dist[rows, best])
        stuck[active[dead]] = True
        ok = ~dead
        act, rr, bl = active[ok], rows[ok], best[ok]
        step = (np.abs(f[rr, bl]) / norm[rr, bl] ** 2)[:, None] * w[rr, bl]
        r_tot[act] += step
        adv[act] = np.clip(X[act] + (1.0 + cfg.overshoot) * r_tot[act], 0.0, 1.0)
        iters[act] += 1
        success[act] = _misclassified(net, adv[act], labels[act])
    return AttackBatch(X, adv, success, iters)


# --------------------------------------------------------------- Carlini-Wagner L2

def cw_margin(logits: np.ndarray, labels) -> np.ndarray:
    """``max_{i != label} logit_i - logit_label`` for each row."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    rows = np.arange(len(z))
    other = z.copy()
    other[rows, labels] = -np.inf
    return other.max(axis=1) - z[rows, labels]


def cw_success(logits: np.ndarray, labels, confidence: float) -> np.ndarray:
    """Margin reaches ``confidence`` and the predicted class differs from the label."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    return (cw_margin(z, labels) >= confidence) & (np.argmax(z, axis=1) != labels)


def _cw(net, X, labels, cfg, index):
    n, C = X.shape[0], net.class_count
    rows = np.arange(n)
    kappa = cfg.confidence
    w0 = np.arctanh((2.0 * X - 1.0) * (1.0 - 1e-6))
    x_base = (np.tanh(w0) + 1.0) / 2.0
    const = np.full(n, float(cfg.initial_const))
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    best_l2 = np.full(n, np.inf)
    best_adv = X.copy()
    iters = np.zeros(n, dtype=np.int64)
    beta1, beta2 = 0.9, 0.999

    for _ in range(cfg.binary_search_steps):
        w = w0.copy()
        m = np.zeros_like(w)
        v = np.zeros_like(w)
        found = np.zeros(n, dtype=bool)
        for t in range(1, cfg.max_iter + 1):
            xa = (np.tanh(w) + 1.0) / 2.0
            pre, post = nn._run(net, xa)
            z = post[-1]
            succ = cw_success(z, labels, kappa)
            l2 = ((xa - x_base) ** 2).sum(axis=1)
            better = succ & (l2 < best_l2)
            best_l2[better] = l2[better]
            best_adv[better] = xa[better]
            found |= succ
            iters += 1
            other = z.copy()
            other[rows, labels] = -np.inf
            j = np.argmax(other, axis=1)
            gap = z[rows, labels] - z[rows, j]
            g_logits = np.zeros((n, C))
            live = gap > -kappa
            g_logits[rows[live], labels[live]] = const[live]
            g_logits[rows[live], j[live]] -= const[live]
            g_x = 2.0 * (xa - x_base) + nn._backprop(net, pre, g_logits)
            g_w = g_x * (1.0 - np.tanh(w) ** 2) / 2.0
            m = beta1 * m + (1 - beta1) * g_w
            v = beta2 * v + (1 - beta2) * g_w ** 2
            mhat = m / (1 - beta1 ** t)
            vhat = v / (1 - beta2 ** t)
            w = w - cfg.learning_rate * mhat / (np.sqrt(vhat) + 1e-8)
        # last iterate of the inner loop
        xa = (np.tanh(w) + 1.0) / 2.0
        succ = cw_success(nn.logits(net, xa), labels, kappa)
        l2 = ((xa - x_base) ** 2).sum(axis=1)
        better = succ & (l2 < best_l2)
        best_l2[better] = l2[better]
        best_adv[better] = xa[better]
        found |= succ

        upper = np.where(found, np.minimum(upper, const), upper)
        lower = np.where(found, lower, np.maximum(lower, const))
        const = np.where(np.isfinite(upper), (lower + upper) / 2.0, const * 10.0)

    success = np.isfinite(best_l2)
    adv = np.where(success[:, None], best_adv, X)
    return AttackBatch(X, np.clip(adv, 0.0, 1.0), success, iters)


# --------------------------------------------------------------------------- JSMA

def jsma_pair_scores(alpha: np.ndarray, beta: np.ndarray, eligible: np.ndarray,
                     theta: float = 1.0) -> np.ndarray:
    """Saliency of every feature pair ``(p, q)`` with ``p < q``; ``-inf`` if inadmissible.

    ``alpha`` is the target-logit gradient, ``beta`` the summed gradient of the
    other logits. For ``theta > 0`` a pair is admissible when the pair sum of
    ``alpha`` is positive and of ``beta`` negative; its saliency is
    ``alpha_pair * |beta_pair|``. Signs flip for ``theta < 0``.
    """
    a = alpha[..., :, None] + alpha[..., None, :]
    b = beta[..., :, None] + beta[..., None, :]
    d = alpha.shape[-1]
    upper = np.triu(np.ones((d, d), dtype=bool), k=1)
    both = eligible[..., :, None] & eligible[..., None, :] & upper
    if theta >= 0:
        valid = both & (a > 0) & (b < 0)
        score = a * -b
    else:
        valid = both & (a < 0) & (b > 0)
        score = -a * b
    return np.where(valid, score, -np.inf)


def _jsma_targets(cfg, labels, index, C):
    targets = np.empty(len(labels), dtype=np.int64)
    for r, rng in enumerate(_rows_rng(cfg, index)):
        choice = int(rng.integers(0, C - 1))
        targets[r] = choice if choice < labels[r] else choice + 1
    return targets


def _jsma(net, X, labels, cfg, index, targets=None):
    n, D = X.shape
    C = net.class_count
    if targets is None:
        targets = _jsma_targets(cfg, labels, index, C)
    budget = int(math.floor(cfg.gamma * D + 1e-9))
    adv = X.copy()
    iters = np.zeros(n, dtype=np.int64)
    success = _misclassified(net, X, labels)
    done = success | (budget == 0)
    while True:
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        z, jac = nn.logit_jacobian(net, adv[active])
        rows = np.arange(active.size)
        alpha = jac[rows, targets[active]]
        beta = jac.sum(axis=1) - alpha
        cur = adv[active]
        eligible = cur < 1.0 if cfg.theta >= 0 else cur > 0.0
        scores = jsma_pair_scores(alpha, beta, eligible, cfg.theta)
        flat = scores.reshape(active.size, -1)
        pick = np.argmax(flat, axis=1)
        viable = np.isfinite(flat[rows, pick]) & (eligible.sum(axis=1) >= 2)
        done[active[~viable]] = True
        act, pick = active[viable], pick[viable]
        if act.size == 0:
            continue
        p, q = np.divmod(pick, D)
        adv[act, p] = np.clip(adv[act, p] + cfg.theta, 0.0, 1.0)
        adv[act, q] = np.clip(adv[act, q] + cfg.theta, 0.0, 1.0)
        iters[act] += 1
        success[act] = _misclassified(net, adv[act], labels[act])
        perturbed = (adv[act] != X[act]).sum(axis=1)
        done[act] = success[act] | (perturbed >= budget)
    return AttackBatch(X, adv, success, iters)


# -------------------------------------------------------------------------- noise

def _noise(net, X, labels, cfg, index):
    noisy = np.empty_like(X)
    for r, rng in enumerate(_rows_rng(cfg, index)):
        noisy[r] = X[r] + rng.normal(cfg.noise_mean, cfg.noise_std, size=X.shape[1])
    noisy = np.clip(noisy, 0.0, 1.0)
    return AttackBatch(X, noisy, _misclassified(net, noisy, labels), np.ones(len(X), dtype=np.int64))


_KERNELS = {"FGSM": _fgsm, "BIM": _bim, "PGD": _pgd, "DF": _deepfool, "CW": _cw,
            "JSMA": _jsma, "NOISE": _noise}


def run_attack(net: nn.Network, X, labels, cfg: AttackConfig, index=None) -> AttackBatch:
    """Attack every row of ``X``; ``index`` (default ``0..n-1``) seeds per-row randomness."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.input_width:
        raise InputShapeError(f"expected inputs of width {net.input_width}, got {X.shape[1]}")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(labels) != len(X):
        raise InputShapeError("one label per input is required")
    index = np.arange(len(X)) if index is None else np.atleast_1d(np.asarray(index, dtype=np.int64))
    if len(X) == 0:
        empty = np.zeros((0, X.shape[1]))
        return AttackBatch(empty, empty.copy(), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64))
    return _KERNELS[cfg.kind](net, X, labels, cfg, index)


def _single(net, x, label, cfg, kind, index=0):
    if cfg.kind != kind:
        cfg = replace(cfg, kind=kind)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError("expected a single input vector")
    return run_attack(net, x[None, :], [label], cfg, [index]).result(0)


def fgsm(net, x, label, cfg=None) -> AttackResult:
    return _single(net, x, label, cfg or AttackConfig("FGSM"), "FGSM")


def bim(net, x, label, cfg=None) -> AttackResult:
    return _single(net, x, label, cfg or AttackConfig("BIM"), "BIM")


def pgd(net, x, label, cfg=None, index: int = 0) -> AttackResult:
    return _single(net, x, label, cfg or AttackConfig("PGD"), "PGD", index)


def deepfool(net, x, cfg=None, label: Optional[int] = None) -> AttackResult:
    """DeepFool against ``label`` (defaults to the network's own prediction)."""
    if label is None:
        label = nn.predict(net, x)[0]
    return _single(net, x, label, cfg or AttackConfig("DF"), "DF")


def cw_l2(net, x, label, cfg=None) -> AttackResult:
    return _single(net, x, label, cfg or AttackConfig("CW"), "CW")


def jsma(net, x, label, cfg=None, index: int = 0, target: Optional[int] = None) -> AttackResult:
    cfg = replace(cfg or AttackConfig("JSMA"), kind="JSMA")
    x = np.asarray(x, dtype=np.float64)[None, :]
    targets = None if target is None else np.array([target])
    batch = _jsma(net, x, np.array([label]), cfg, np.array([index]), targets)
    return batch.result(0)


def gaussian_noise(x, cfg=None, index: int = 0, clip: bool = True) -> np.ndarray:
    """``x`` plus i.i.d. Gaussian noise, clipped to ``[0, 1]`` unless ``clip`` is off.

    Row ``r`` of a batch draws from the stream ``(cfg.seed, index + r)``.
    """
    cfg = cfg or AttackConfig("NOISE")
    if cfg.noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    out = np.empty_like(X)
    for r in range(len(X)):
        rng = np.random.default_rng([int(cfg.seed), int(index) + r])
        out[r] = X[r] + rng.normal(cfg.noise_mean, cfg.noise_std, size=X.shape[1])
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


# ---------------------------------------------------------------- adversarial sets

@dataclass(eq=False)
class AdversarialSet:
    """Successful adversarial inputs, each tagged with its attack and source input."""

    inputs: np.ndarray
    labels: np.ndarray
    preds: np.ndarray
    attack: np.ndarray
    source_index: np.ndarray
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def select(self, attacks: Iterable[str]) -> "AdversarialSet":
        wanted = list(attacks)
        mask = np.isin(self.attack, wanted)
        return AdversarialSet(self.inputs[mask], self.labels[mask], self.preds[mask],
                              self.attack[mask], self.source_index[mask],
                              {k: v for k, v in self.counts.items() if k in wanted})

    @classmethod
    def empty(cls, width: int) -> "AdversarialSet":
        return cls(np.zeros((0, width)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                   np.zeros(0, dtype=object), np.zeros(0, dtype=np.int64), {})

    @classmethod
    def concat(cls, parts: Sequence["AdversarialSet"], width: int) -> "AdversarialSet":
        if not parts:
            return cls.empty(width)
        counts = {}
        for p in parts:
            counts.update(p.counts)
        return cls(np.concatenate([p.inputs for p in parts]).reshape(-1, width),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.preds for p in parts]),
                   np.concatenate([p.attack for p in parts]),
                   np.concatenate([p.source_index for p in parts]), counts)


def generate_attack_set(net: nn.Network, normals: LabeledDataset, cfgs: Sequence[AttackConfig],
                        index=None) -> AdversarialSet:
    """Run each attack on ``normals`` and keep only the successful outputs.

    ``index`` gives the provenance of each normal input (defaults to its row).
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise EmptyDataError("no attack configurations given")
    index = np.arange(len(normals)) if index is None else np.asarray(index, dtype=np.int64)
    parts = []
    for cfg in cfgs:
        if cfg.kind == "NOISE":
            raise ValueError("the noise control produces normal inputs; use noisy_normals()")
        batch = run_attack(net, normals.inputs, normals.labels, cfg, index)
        keep = np.flatnonzero(batch.success)
        adv = batch.adversarial[keep]
        parts.append(AdversarialSet(
            adv, normals.labels[keep], nn.predict_classes(net, adv) if len(keep) else keep.copy(),
            np.array([cfg.label] * len(keep), dtype=object), index[keep],
            {cfg.label: {"attempted": len(normals), "succeeded": int(len(keep))}}))
    return AdversarialSet.concat(parts, normals.width)


def noisy_normals(net: nn.Network, normals: LabeledDataset, cfg: AttackConfig,
                  index=None) -> AdversarialSet:
    """Noise-perturbed normals that the network still classifies correctly."""
    index = np.arange(len(normals)) if index is None else np.asarray(index, dtype=np.int64)
    batch = run_attack(net, normals.inputs, normals.labels, replace(cfg, kind="NOISE"), index)
    keep = np.flatnonzero(~batch.success)
    return AdversarialSet(batch.adversarial[keep], normals.labels[keep], normals.labels[keep],
                          np.array([cfg.label] * len(keep), dtype=object), index[keep],
                          {cfg.label: {"attempted": len(normals), "kept": int(len(keep))}})


def save_adversarial_set(adv: AdversarialSet, cfgs: Sequence[AttackConfig], csv_path: PathLike,
                         manifest_path: PathLike, extra: Optional[dict] = None) -> None:
    width = adv.inputs.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source_index", "attack", "success", "label", "pred"]
                    + [f"f{i + 1}" for i in range(width)])
    for i in range(len(adv)):
        writer.writerow([int(adv.source_index[i]), adv.attack[i], 1, int(adv.labels[i]),
                         int(adv.preds[i])] + [repr(float(v)) for v in adv.inputs[i]])
    write_atomic(csv_path, buf.getvalue())
    manifest = {"version": 1, "attacks": {c.label: c.to_dict() for c in cfgs},
                "counts": adv.counts, "norms": {c.label: c.norm for c in cfgs}}
    if extra:
        manifest.update(extra)
    write_atomic(manifest_path, dump_json(manifest))


def load_adversarial_set(csv_path: PathLike) -> AdversarialSet:
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:5] != ["source_index", "attack", "success", "label", "pred"]:
        raise FormatError(f"{csv_path}: not an adversarial-set CSV")
    body = [r for r in rows[1:] if r]
    width = len(rows[0]) - 5
    try:
        inputs = np.array([[float(v) for v in r[5:]] for r in body]).reshape(-1, width)
        keep = np.array([int(r[2]) == 1 for r in body], dtype=bool)
        out = AdversarialSet(inputs, np.array([int(r[3]) for r in body], dtype=np.int64),
                             np.array([int(r[4]) for r in body], dtype=np.int64),
                             np.array([r[1] for r in body], dtype=object),
                             np.array([int(r[0]) for r in body], dtype=np.int64))
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{csv_path}: malformed row: {exc}") from exc
    if not keep.all():
        mask = np.flatnonzero(keep)
        out = AdversarialSet(out.inputs[mask], out.labels[mask], out.preds[mask],
                             out.attack[mask], out.source_index[mask])
    return out


def load_manifest(path: PathLike) -> Dict[str, AttackConfig]:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid manifest: {exc}") from exc
    return {label: AttackConfig.from_dict(c) for label, c in obj.get("attacks", {}).items()}
