"""Activation fingerprints and the choice of neurons to monitor.

An :class:`ActivationMatrix` has one row per input (its activation
fingerprint) and one column per hidden neuron (that neuron's activation-value
block). Comparing the column means of normal and adversarial matrices ranks
neurons; the least responsive fraction is filtered out as inessential and the
detector watches ``k`` of the remaining ones.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from ._io import PathLike, write_atomic
from .errors import EmptyDataError, FormatError, RaidError
from .nn import NeuronId
from .rng import PCG32

SELECTION_MODES = ("random", "best", "worst")

# colour bands for diagnostics only; filtering never uses them.
RED_BELOW = 0.03
YELLOW_ABOVE = 0.35


def neuron_name(nid: NeuronId) -> str:
    return f"L{nid[0]}_U{nid[1]}"


def parse_neuron_name(name: str) -> NeuronId:
    try:
        layer, unit = name.split("_")
        if not (layer.startswith("L") and unit.startswith("U")):
            raise ValueError(name)
        return int(layer[1:]), int(unit[1:])
    except ValueError as exc:
        raise FormatError(f"bad neuron id {name!r}") from exc


@dataclass(frozen=True, eq=False)
class ActivationMatrix:
    neuron_ids: Tuple[NeuronId, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        ids = tuple(tuple(n) for n in self.neuron_ids)
        if rows.ndim != 2 or rows.shape[1] != len(ids):
            raise RaidError(f"matrix of shape {rows.shape} does not match {len(ids)} neuron ids")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "neuron_ids", ids)

    def __len__(self):
        return self.rows.shape[0]

    def column_index(self) -> Dict[NeuronId, int]:
        return {nid: j for j, nid in enumerate(self.neuron_ids)}

    def block(self, nid: NeuronId) -> np.ndarray:
        """Activation values of one neuron over all rows."""
        return self.rows[:, self.column_index()[tuple(nid)]]

    def take_rows(self, index) -> "ActivationMatrix":
        return ActivationMatrix(self.neuron_ids, self.rows[np.asarray(index, dtype=np.int64)])

    @staticmethod
    def concat(parts: Sequence["ActivationMatrix"]) -> "ActivationMatrix":
        if not parts:
            raise EmptyDataError("nothing to concatenate")
        ids = parts[0].neuron_ids
        if any(p.neuron_ids != ids for p in parts):
            raise RaidError("cannot concatenate matrices over different neurons")
        return ActivationMatrix(ids, np.concatenate([p.rows for p in parts]))


@dataclass(frozen=True, eq=False)
class MeanFingerprint:
    neuron_ids: Tuple[NeuronId, ...]
    means: np.ndarray


@dataclass(frozen=True)
class MonitorSet:
    ids: Tuple[NeuronId, ...]
    mode: str = "random"
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        ids = tuple(tuple(int(v) for v in n) for n in self.ids)
        if len(set(ids)) != len(ids):
            raise RaidError("monitor set contains duplicate neurons")
        if self.mode not in SELECTION_MODES:
            raise ValueError(f"unknown selection mode {self.mode!r}")
        object.__setattr__(self, "ids", ids)

    @property
    def k(self) -> int:
        return len(self.ids)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream": self.stream, "mode": self.mode, "k": self.k,
                "ids": [neuron_name(n) for n in self.ids]}

    @classmethod
    def from_dict(cls, obj: dict) -> "MonitorSet":
        try:
            ids = tuple(parse_neuron_name(s) for s in obj["ids"])
            if int(obj.get("k", len(ids))) != len(ids):
                raise FormatError("monitor set k does not match its ids")
            return cls(ids, obj.get("mode", "random"), int(obj.get("seed", 0)), int(obj.get("stream", 0)))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed monitor set: {exc}") from exc


def record_fingerprints(net: nn.Network, inputs) -> ActivationMatrix:
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if len(X) == 0:
        raise EmptyDataError("no inputs to fingerprint")
    return ActivationMatrix(net.neuron_ids, nn.hidden_activations(net, X))


def mean_fingerprint(m: ActivationMatrix) -> MeanFingerprint:
    if len(m) == 0:
        raise EmptyDataError("mean of an empty activation matrix")
    return MeanFingerprint(m.neuron_ids, m.rows.mean(axis=0, dtype=np.float64))


def mean_diff(a: MeanFingerprint, b: MeanFingerprint) -> np.ndarray:
    """Element-wise ``|a - b|`` in ``a.neuron_ids`` order."""
    if tuple(a.neuron_ids) != tuple(b.neuron_ids):
        raise RaidError("mean fingerprints cover different neurons")
    return np.abs(np.asarray(a.means) - np.asarray(b.means))


def _drop_count(threshold: float, n: int) -> int:
    # tolerance keeps e.g. 0.29 * 100 from flooring to 28
    return int(math.floor(threshold * n + 1e-9))


def filter_inessential(diff, threshold: float, neuron_ids: Optional[Sequence[NeuronId]] = None) -> list:
    """Drop the ``floor(threshold * N)`` neurons with the smallest differences.

    Ties in ``diff`` go by canonical position. The survivors are returned in
    canonical order, as neuron ids when ``neuron_ids`` is given and as column
    indices otherwise.
    """
    diff = np.asarray(diff, dtype=np.float64).reshape(-1)
    if diff.size == 0:
        raise EmptyDataError("empty difference vector")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("filtering threshold must lie in [0, 1]")
    order = np.lexsort((np.arange(diff.size), diff))
    keep = np.sort(order[_drop_count(threshold, diff.size):])
    if neuron_ids is None:
        return keep.tolist()
    ids = list(neuron_ids)
    if len(ids) != diff.size:
        raise RaidError("neuron ids and difference vector differ in length")
    return [tuple(ids[j]) for j in keep]


def select_monitored(essential: Sequence[NeuronId], k: int, mode: str, diff,
                     seed: int, neuron_ids: Sequence[NeuronId], stream: int = 0) -> MonitorSet:
    """Pick up to ``k`` neurons to monitor.

    ``random`` and ``best`` draw from ``essential``; ``worst`` draws from the
    neurons that were filtered out. ``diff`` is aligned with ``neuron_ids``
    (the canonical enumeration). ``random`` is a partial Fisher-Yates shuffle
    driven by ``PCG32(seed, stream)``.
    """
    if mode not in SELECTION_MODES:
        raise ValueError(f"unknown selection mode {mode!r}")
    all_ids = [tuple(n) for n in neuron_ids]
    pos = {nid: j for j, nid in enumerate(all_ids)}
    diff = np.asarray(diff, dtype=np.float64).reshape(-1)
    if diff.size != len(all_ids):
        raise RaidError("difference vector does not match the neuron enumeration")
    ess = sorted({tuple(n) for n in essential}, key=pos.__getitem__)
    if mode == "worst":
        ess_set = set(ess)
        source = [n for n in all_ids if n not in ess_set]
    else:
        source = ess
    if not source:
        raise EmptyDataError(f"no neurons available for {mode} selection")
    k = min(int(k), len(source))
    if k < 1:
        raise ValueError("k must be at least 1")
    if mode == "random":
        chosen = PCG32(seed, stream).sample(source, k)
    else:
        vals = np.array([diff[pos[n]] for n in source])
        places = np.array([pos[n] for n in source])
        key = -vals if mode == "best" else vals
        order = np.lexsort((places, key))[:k]
        chosen = [source[j] for j in order]
    chosen.sort(key=pos.__getitem__)
    return MonitorSet(tuple(chosen), mode, int(seed), int(stream))


def project(m: ActivationMatrix, ms: MonitorSet) -> ActivationMatrix:
    """Restrict ``m`` to the monitored columns, in monitor-set order."""
    index = m.column_index()
    try:
        cols = [index[n] for n in ms.ids]
    except KeyError as exc:
        raise RaidError(f"neuron {exc.args[0]} is not in the activation matrix") from exc
    return ActivationMatrix(ms.ids, m.rows[:, cols])


def project_rows(rows: np.ndarray, neuron_ids: Sequence[NeuronId], ms: MonitorSet) -> np.ndarray:
    """Column restriction on a raw fingerprint array (rows over ``neuron_ids``)."""
    return project(ActivationMatrix(tuple(neuron_ids), np.atleast_2d(rows)), ms).rows


# ------------------------------------------------------------------ diagnostics & I/O

def diagnose(diff, low: float = RED_BELOW, high: float = YELLOW_ABOVE) -> List[str]:
    """Colour band per neuron: ``red`` below ``low``, ``yellow`` above ``high``, else ``black``."""
    return ["red" if d < low else "yellow" if d > high else "black" for d in np.asarray(diff)]


def write_diagnostics_csv(neuron_ids: Sequence[NeuronId], diff, path: PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["neuron", "mean_diff", "band"])
    for nid, d, band in zip(neuron_ids, np.asarray(diff), diagnose(diff)):
        w.writerow([neuron_name(nid), repr(float(d)), band])
    write_atomic(path, buf.getvalue())


def write_fingerprints_csv(normal: ActivationMatrix, adversarial: ActivationMatrix,
                           path: PathLike) -> None:
    if normal.neuron_ids != adversarial.neuron_ids:
        raise RaidError("matrices cover different neurons")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([neuron_name(n) for n in normal.neuron_ids] + ["label"])
    for tag, m in (("normal", normal), ("adversarial", adversarial)):
        for row in m.rows:
            w.writerow([repr(float(v)) for v in row] + [tag])
    write_atomic(path, buf.getvalue())


def read_fingerprints_csv(path: PathLike) -> Tuple[ActivationMatrix, np.ndarray]:
    """Returns the matrix and a 0/1 label array (1 = adversarial)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][-1] != "label":
        raise FormatError(f"{path}: missing header with a trailing label column")
    ids = tuple(parse_neuron_name(s) for s in rows[0][:-1])
    try:
        values = np.array([[float(v) for v in r[:-1]] for r in rows[1:]]).reshape(-1, len(ids))
        labels = np.array([{"normal": 0, "adversarial": 1}[r[-1]] for r in rows[1:]], dtype=np.int64)
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: malformed row: {exc}") from exc
    return ActivationMatrix(ids, values), labels


def essential_neurons(net_ids: Iterable[NeuronId], normal_rows: np.ndarray, adversarial_rows: np.ndarray,
                      threshold: float):
    """Convenience: mean difference from two raw matrices, then filtering. Returns ``(essential, diff)``."""
    ids = tuple(net_ids)
    a = mean_fingerprint(ActivationMatrix(ids, normal_rows))
    b = mean_fingerprint(ActivationMatrix(ids, adversarial_rows))
    diff = mean_diff(a, b)
    return filter_inessential(diff, threshold, ids), diff
