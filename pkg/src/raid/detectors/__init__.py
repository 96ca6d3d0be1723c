"""Secondary classifiers over activation fingerprints, singly or as a pool.

A detector maps a projected fingerprint to an adversarial score in
``[0, 1]``; an input is flagged adversarial when its score is at least
:data:`DECISION_THRESHOLD`. A pool holds several detectors over independently
drawn monitor sets of equal size and answers each query with one member
picked uniformly at random.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .._io import PathLike, dump_json, write_atomic
from ..errors import EmptyDataError, FormatError, InputShapeError, RaidError
from ..fingerprint import (ActivationMatrix, MonitorSet, neuron_name, parse_neuron_name, project,
                           select_monitored)
from ..nn import NeuronId
from ..rng import PCG32
from .ensemble import AdaBoost, Forest, fit_adaboost, fit_forest
from .knn import KNN
from .tree import Tree, grow_tree

DETECTOR_KINDS = ("DT", "RF", "AB", "KNN")
DECISION_THRESHOLD = 0.5
FORMAT_VERSION = 1

NORMAL, ADVERSARIAL = 0, 1


@dataclass(frozen=True)
class DetectorSpec:
    kind: str = "RF"
    estimators: int = 32
    neighbors: int = 5
    max_depth: Optional[int] = None
    max_features: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.estimators < 1 or self.neighbors < 1:
            raise ValueError("estimators and neighbors must be positive")

    @property
    def label(self) -> str:
        if self.kind in ("RF", "AB"):
            return f"{self.kind}{self.estimators}"
        if self.kind == "KNN":
            return f"KNN{self.neighbors}"
        return "DT"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorSpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "DetectorSpec":
        """``DT``, ``RF32``, ``AB64``, ``KNN3`` and so on."""
        text = text.strip().upper()
        for kind in ("KNN", "RF", "AB", "DT"):
            if text.startswith(kind):
                rest = text[len(kind):]
                if kind == "DT":
                    if rest:
                        break
                    return cls("DT", seed=seed)
                if kind == "KNN":
                    return cls("KNN", neighbors=int(rest or 5), seed=seed)
                return cls(kind, estimators=int(rest or 32), seed=seed)
        raise ValueError(f"cannot parse detector spec {text!r}")


def classifier_sweep(seed: int = 0) -> List[DetectorSpec]:
    """DT, RF and AB with 32/64/128 estimators, KNN with 3 and 5 neighbours."""
    specs = [DetectorSpec("DT", seed=seed)]
    specs += [DetectorSpec("RF", estimators=e, seed=seed) for e in (32, 64, 128)]
    specs += [DetectorSpec("AB", estimators=e, seed=seed) for e in (32, 64, 128)]
    specs += [DetectorSpec("KNN", neighbors=k, seed=seed) for k in (3, 5)]
    return specs


@dataclass(frozen=True)
class FingerprintSample:
    features: Tuple[float, ...]
    label: int


Model = Union[Tree, Forest, AdaBoost, KNN]


@dataclass(frozen=True, eq=False)
class Detector:
    spec: DetectorSpec
    model: Model
    dim: int
    monitor_set: Optional[MonitorSet] = None

    def score(self, af) -> np.ndarray:
        X = np.atleast_2d(np.asarray(af, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise InputShapeError(f"detector expects {self.dim} features, got {X.shape[1]}")
        return np.clip(self.model.score(X), 0.0, 1.0)


def _as_training_arrays(samples, labels=None):
    if labels is None:
        samples = list(samples)
        if not samples:
            raise EmptyDataError("no training samples")
        X = np.array([s.features for s in samples], dtype=np.float64)
        y = np.array([s.label for s in samples], dtype=np.int64)
    else:
        X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(y) == 0 or X.size == 0:
        raise EmptyDataError("no training samples")
    if len(X) != len(y):
        raise InputShapeError("one label per fingerprint is required")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise RaidError("detector training needs both normal and adversarial samples")
    if not np.isin(y, (NORMAL, ADVERSARIAL)).all():
        raise RaidError("labels must be 0 (normal) or 1 (adversarial)")
    return X, y


def train_detector(spec: DetectorSpec, samples, labels=None,
                   monitor_set: Optional[MonitorSet] = None) -> Detector:
    """Fit ``spec`` on fingerprints.

    ``samples`` is either a list of :class:`FingerprintSample` or a 2-D array
    with ``labels`` alongside. Fitting is a pure function of ``spec.seed`` and
    the sample order.
    """
    X, y = _as_training_arrays(samples, labels)
    if monitor_set is not None and monitor_set.k != X.shape[1]:
        raise InputShapeError("monitor set size does not match the fingerprint width")
    if spec.kind == "DT":
        model = grow_tree(X, y, max_depth=spec.max_depth, max_features=spec.max_features, seed=spec.seed)
    elif spec.kind == "RF":
        model = fit_forest(X, y, spec.estimators, spec.seed, spec.max_features, spec.bootstrap,
                           spec.max_depth)
    elif spec.kind == "AB":
        model = fit_adaboost(X, y, spec.estimators)
    else:
        model = KNN(X.copy(), y.astype(np.float64), spec.neighbors)
    return Detector(spec, model, X.shape[1], monitor_set)


def score(d: Detector, af):
    """Adversarial score; a float for one fingerprint, an array for a batch."""
    s = d.score(af)
    return float(s[0]) if np.asarray(af).ndim == 1 else s


def classify(d: Detector, af):
    s = d.score(af)
    labels = (s >= DECISION_THRESHOLD).astype(np.int64)
    return int(labels[0]) if np.asarray(af).ndim == 1 else labels


def member_seed(seed: int, member: int) -> int:
    """Detector seed of pool member ``member``; member 0 keeps ``seed`` itself."""
    if member == 0:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), int(member)]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class DetectorPool:
    detectors: Tuple[Detector, ...]
    neuron_ids: Tuple[NeuronId, ...]
    seed: int = 0

    def __len__(self):
        return len(self.detectors)

    def columns(self, member: int) -> np.ndarray:
        pos = {nid: j for j, nid in enumerate(self.neuron_ids)}
        return np.array([pos[n] for n in self.detectors[member].monitor_set.ids], dtype=np.int64)


def build_pool(spec: DetectorSpec, essential: Sequence[NeuronId], k: int, pool_size: int,
               matrix: ActivationMatrix, labels, seed: int) -> DetectorPool:
    """Train ``pool_size`` detectors, member ``i`` on the monitor set drawn by
    ``PCG32(seed, stream=i)``.

    With ``pool_size == 1`` the only member is exactly the single detector a
    non-pooled run with the same seeds would train.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be at least 1")
    if k > len(essential):
        raise ValueError(f"k={k} exceeds the {len(essential)} essential neurons")
    zeros = np.zeros(len(matrix.neuron_ids))
    members = []
    for i in range(pool_size):
        ms = select_monitored(essential, k, "random", zeros, seed, matrix.neuron_ids, stream=i)
        members.append(train_detector(replace(spec, seed=member_seed(spec.seed, i)),
                                      project(matrix, ms).rows, labels, ms))
    return DetectorPool(tuple(members), tuple(matrix.neuron_ids), int(seed))


def pool_scores(pool: DetectorPool, rows, rng: PCG32) -> Tuple[np.ndarray, np.ndarray]:
    """Score full fingerprints, drawing one member per row (in row order) from ``rng``."""
    if len(pool) == 0:
        raise EmptyDataError("empty detector pool")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(pool.neuron_ids):
        raise InputShapeError(f"pool expects fingerprints over {len(pool.neuron_ids)} neurons")
    members = np.array([rng.bounded(len(pool)) for _ in range(len(rows))], dtype=np.int64)
    scores = np.empty(len(rows))
    for m in np.unique(members):
        sel = members == m
        scores[sel] = pool.detectors[m].score(rows[sel][:, pool.columns(m)])
    return scores, members


def pool_classify(pool: DetectorPool, af, rng: PCG32) -> Tuple[int, int]:
    """Label one full fingerprint with a uniformly drawn member; returns ``(label, member)``."""
    s, members = pool_scores(pool, np.asarray(af, dtype=np.float64)[None, :], rng)
    return int(s[0] >= DECISION_THRESHOLD), int(members[0])


def detect_full(d: Detector, rows, neuron_ids: Sequence[NeuronId]) -> np.ndarray:
    """Score full fingerprints with a detector that carries its monitor set."""
    if d.monitor_set is None:
        raise RaidError("detector has no monitor set")
    pos = {tuple(n): j for j, n in enumerate(neuron_ids)}
    try:
        cols = [pos[n] for n in d.monitor_set.ids]
    except KeyError as exc:
        raise InputShapeError(f"neuron {exc.args[0]} is not in this network") from exc
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(pos):
        raise InputShapeError(f"expected fingerprints over {len(pos)} neurons, got {rows.shape[1]}")
    return d.score(rows[:, cols])


# ---------------------------------------------------------------------- persistence

_MODEL_TYPES = {"DT": Tree, "RF": Forest, "AB": AdaBoost, "KNN": KNN}


def _detector_dict(d: Detector) -> dict:
    return {"spec": d.spec.to_dict(), "dim": d.dim,
            "monitor_set": d.monitor_set.to_dict() if d.monitor_set else None,
            "model": d.model.to_dict()}


def _detector_from(obj: dict) -> Detector:
    spec = DetectorSpec.from_dict(obj["spec"])
    ms = MonitorSet.from_dict(obj["monitor_set"]) if obj.get("monitor_set") else None
    return Detector(spec, _MODEL_TYPES[spec.kind].from_dict(obj["model"]), int(obj["dim"]), ms)


def detector_to_dict(obj: Union[Detector, DetectorPool], neuron_ids: Optional[Sequence[NeuronId]] = None,
                     config: Optional[dict] = None) -> dict:
    out = {"version": FORMAT_VERSION}
    if isinstance(obj, DetectorPool):
        out.update(type="pool", seed=obj.seed, neuron_ids=[neuron_name(n) for n in obj.neuron_ids],
                   members=[_detector_dict(d) for d in obj.detectors])
    else:
        out.update(type="detector", detector=_detector_dict(obj))
        if neuron_ids is not None:
            out["neuron_ids"] = [neuron_name(n) for n in neuron_ids]
    if config is not None:
        out["config"] = config
    return out


def detector_from_dict(obj: dict):
    """Inverse of :func:`detector_to_dict`; returns ``(detector_or_pool, neuron_ids)``."""
    if not isinstance(obj, dict) or obj.get("version") != FORMAT_VERSION:
        raise FormatError("unsupported detector file version")
    try:
        ids = tuple(parse_neuron_name(s) for s in obj.get("neuron_ids", []))
        if obj["type"] == "pool":
            return DetectorPool(tuple(_detector_from(m) for m in obj["members"]), ids,
                                int(obj["seed"])), ids
        if obj["type"] == "detector":
            return _detector_from(obj["detector"]), ids
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed detector file: {exc}") from exc
    raise FormatError(f"unknown detector file type {obj.get('type')!r}")


def save_detector(obj, path: PathLike, neuron_ids=None, config=None) -> None:
    write_atomic(path, dump_json(detector_to_dict(obj, neuron_ids, config)))


def load_detector(path: PathLike):
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not JSON: {exc}") from exc
    return detector_from_dict(payload)
