"""Random forests (bagged CART) and binary SAMME AdaBoost over stumps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .tree import Tree, grow_tree


@dataclass(frozen=True, eq=False)
class Forest:
    trees: Sequence[Tree]

    def score(self, X) -> np.ndarray:
        return np.mean([t.score(X) for t in self.trees], axis=0)

    def to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, obj) -> "Forest":
        return cls(tuple(Tree.from_dict(t) for t in obj["trees"]))


def fit_forest(X, y, n_trees: int, seed: int, max_features: Optional[int] = None,
               bootstrap: bool = True, max_depth: Optional[int] = None) -> Forest:
    """Each tree sees a bootstrap resample (as multiplicity weights) and
    ``ceil(sqrt(d))`` candidate features per split unless ``max_features``
    says otherwise."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if max_features is None:
        max_features = int(math.ceil(math.sqrt(d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        weights = np.bincount(rng.integers(0, n, n), minlength=n) if bootstrap else np.ones(n)
        tree_seed = int(rng.integers(0, 2 ** 32))
        trees.append(grow_tree(X, y, weights, max_depth=max_depth, max_features=max_features,
                               seed=tree_seed))
    return Forest(tuple(trees))


@dataclass(frozen=True, eq=False)
class AdaBoost:
    stumps: Sequence[Tree]
    alphas: Sequence[float]

    def margin(self, X) -> np.ndarray:
        total = np.zeros(np.atleast_2d(X).shape[0])
        for stump, a in zip(self.stumps, self.alphas):
            total += a * np.where(stump.score(X) >= 0.5, 1.0, -1.0)
        return total

    def score(self, X) -> np.ndarray:
        """Logistic of the signed weighted vote."""
        m = self.margin(X)
        return 0.5 * (1.0 + np.tanh(0.5 * m))

    def to_dict(self) -> dict:
        return {"stumps": [s.to_dict() for s in self.stumps], "alphas": list(map(float, self.alphas))}

    @classmethod
    def from_dict(cls, obj) -> "AdaBoost":
        return cls(tuple(Tree.from_dict(s) for s in obj["stumps"]), tuple(obj["alphas"]))


def fit_adaboost(X, y, n_estimators: int) -> AdaBoost:
    """Two-class SAMME: ``alpha = log((1 - err) / err)`` and misclassified
    samples are up-weighted by ``exp(alpha)``.

    Boosting stops early on a perfect stump (kept with weight 1) or on one no
    better than chance.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.full(len(y), 1.0 / len(y))
    stumps: List[Tree] = []
    alphas: List[float] = []
    for _ in range(n_estimators):
        stump = grow_tree(X, y, w, max_depth=1)
        miss = (stump.score(X) >= 0.5) != (y == 1)
        err = float(np.sum(w[miss]) / np.sum(w))
        if err <= 0.0:
            stumps.append(stump)
            alphas.append(1.0)
            break
        if err >= 0.5:
            if not stumps:
                stumps.append(stump)
                alphas.append(0.0)
            break
        alpha = math.log((1.0 - err) / err)
        stumps.append(stump)
        alphas.append(alpha)
        w = w * np.exp(alpha * miss)
        w /= w.sum()
    return AdaBoost(tuple(stumps), tuple(alphas))
