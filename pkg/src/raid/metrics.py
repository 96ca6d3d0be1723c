"""Detection metrics with adversarial as the positive class."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import RaidError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def confusion(true_labels, predicted_labels) -> ConfusionCounts:
    t = np.asarray(true_labels).astype(bool)
    p = np.asarray(predicted_labels).astype(bool)
    if t.shape != p.shape:
        raise RaidError(f"{t.size} true labels but {p.size} predictions")
    return ConfusionCounts(tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)),
                           tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p)))


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def metrics(c: ConfusionCounts) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """``(accuracy, tpr, fpr)``; a metric with a zero denominator is ``None``."""
    return _ratio(c.tp + c.tn, c.total), _ratio(c.tp, c.tp + c.fn), _ratio(c.fp, c.fp + c.tn)


def _split(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise RaidError("scores and labels differ in length")
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise RaidError("AUC needs both adversarial and normal samples")
    return pos, neg


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: ``(#pairs adv > normal + 0.5 * #ties) / (#adv * #normal)``."""
    pos, neg = _split(scores, labels)
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    # integer counts keep the result bit-identical to direct pair counting
    twice_u = int(np.sum(2 * below + (upto - below)))
    return (twice_u / 2) / (pos.size * neg.size)


def roc_curve(scores, labels) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` with one point per distinct score, starting at (0, 0)."""
    pos, neg = _split(scores, labels)
    s = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(pos.size, bool), np.zeros(neg.size, bool)])
    thresholds = np.unique(s)[::-1]
    tpr = np.array([0.0] + [np.mean(pos >= t) for t in thresholds])
    fpr = np.array([0.0] + [np.mean(neg >= t) for t in thresholds])
    return fpr, tpr, np.concatenate([[np.inf], thresholds])


def summarize(values: Sequence[Optional[float]]) -> Dict[str, Optional[float]]:
    """Mean and population standard deviation, ignoring absent values."""
    v = np.array([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    if np.all(v == v[0]):
        # rounding in the mean must not turn identical runs into a non-zero spread
        return {"mean": float(v[0]), "std": 0.0, "n": int(v.size)}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}
