"""Binary CART trees with weighted Gini impurity.

Sample weights double as bootstrap multiplicities (a weight of 3 is three
copies of the sample), so the forest never materialises resampled arrays.
Leaves store the weighted fraction of class-1 samples that reached them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

LEAF = -1


@numba.njit(cache=True)
def _grow(X, y, w, max_depth, max_features, shuffle, seed):
    np.random.seed(seed)
    n, d = X.shape
    samples = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if w[i] > 0:
            samples[m] = i
            m += 1
    cap = 2 * m + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_start[0], st_end[0], st_node[0], st_depth[0] = 0, m, 0, 0
    top = 1
    count = 1
    buf = np.empty(m, dtype=np.int64)
    vals = np.empty(m)
    order_f = np.empty(d, dtype=np.int64)

    while top > 0:
        top -= 1
        s, e, node, depth = st_start[top], st_end[top], st_node[top], st_depth[top]
        W = 0.0
        P = 0.0
        for i in range(s, e):
            W += w[samples[i]]
            P += w[samples[i]] * y[samples[i]]
        weight[node] = W
        value[node] = P / W if W > 0 else 0.0
        if P <= 0.0 or P >= W or e - s < 2 or (max_depth >= 0 and depth >= max_depth):
            continue

        # features in index order, or a fresh random order drawn lazily (partial Fisher-Yates)
        for fi in range(d):
            order_f[fi] = fi
        best_score = -1.0
        best_f = -1
        best_thr = 0.0
        visited = 0
        for fi in range(d):
            if visited >= max_features and best_f >= 0:
                break
            if shuffle:
                j = fi + np.random.randint(d - fi)
                tmp = order_f[fi]
                order_f[fi] = order_f[j]
                order_f[j] = tmp
            f = order_f[fi]
            cnt = e - s
            for i in range(cnt):
                vals[i] = X[samples[s + i], f]
            order = np.argsort(vals[:cnt])
            if vals[order[0]] == vals[order[cnt - 1]]:
                continue
            visited += 1
            wl = 0.0
            pl = 0.0
            for i in range(cnt - 1):
                idx = samples[s + order[i]]
                wl += w[idx]
                pl += w[idx] * y[idx]
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v0 < v1:
                    wr = W - wl
                    pr = P - pl
                    nl = wl - pl
                    nr = wr - pr
                    score = (pl * pl + nl * nl) / wl + (pr * pr + nr * nr) / wr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        thr = v0 + (v1 - v0) / 2.0
                        if thr >= v1:
                            thr = v0
                        best_thr = thr
        if best_f < 0:
            continue

        # stable partition: left block keeps x <= thr
        nl_count = 0
        for i in range(s, e):
            if X[samples[i], best_f] <= best_thr:
                buf[nl_count] = samples[i]
                nl_count += 1
        k = nl_count
        for i in range(s, e):
            if X[samples[i], best_f] > best_thr:
                buf[k] = samples[i]
                k += 1
        for i in range(e - s):
            samples[s + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = count
        right[node] = count + 1
        mid = s + nl_count
        st_start[top], st_end[top], st_node[top], st_depth[top] = mid, e, count + 1, depth + 1
        top += 1
        st_start[top], st_end[top], st_node[top], st_depth[top] = s, mid, count, depth + 1
        top += 1
        count += 2

    return (feature[:count].copy(), threshold[:count].copy(), left[:count].copy(),
            right[:count].copy(), value[:count].copy(), weight[:count].copy())


@numba.njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for node in range(self.node_count):
            if self.feature[node] != LEAF:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def score(self, X) -> np.ndarray:
        """Class-1 fraction at the leaf each row reaches."""
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "weight": self.weight.tolist(),
                "n_features": self.n_features}

    @classmethod
    def from_dict(cls, obj: dict) -> "Tree":
        return cls(np.asarray(obj["feature"], dtype=np.int64), np.asarray(obj["threshold"], dtype=np.float64),
                   np.asarray(obj["left"], dtype=np.int64), np.asarray(obj["right"], dtype=np.int64),
                   np.asarray(obj["value"], dtype=np.float64), np.asarray(obj["weight"], dtype=np.float64),
                   int(obj["n_features"]))


def grow_tree(X, y, sample_weight=None, max_depth: Optional[int] = None,
              max_features: Optional[int] = None, seed: int = 0) -> Tree:
    """Grow a tree until leaves are pure, ``max_depth`` is hit or no split remains.

    With ``max_features`` below the feature count each node examines features
    in a random order and stops after that many non-constant ones (continuing
    past it only while no valid split has been found). Otherwise features are
    scanned in index order, so exact ties go to the lowest feature and then
    the lowest threshold.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ones(len(y)) if sample_weight is None else np.ascontiguousarray(sample_weight, dtype=np.float64)
    d = X.shape[1]
    mf = d if max_features is None else max(1, min(int(max_features), d))
    arrays = _grow(X, y, w, -1 if max_depth is None else int(max_depth), mf, mf < d,
                   int(seed) % (2 ** 32))
    return Tree(*arrays, n_features=d)
