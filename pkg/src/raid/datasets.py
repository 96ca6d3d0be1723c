"""Labelled datasets: IDX and CSV ingestion plus two bundled synthetic sets.

Features are always real numbers in ``[0, 1]``; IDX bytes are divided by 255.
"""
from __future__ import annotations

import csv
import gzip
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ._io import PathLike, write_atomic
from .errors import EmptyDataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise FormatError(f"inputs must be a 2-D array, got shape {X.shape}")
        if len(X) != len(y):
            raise FormatError(f"{len(X)} inputs but {len(y)} labels")
        if len(y) and (y.min() < 0 or y.max() >= self.class_count):
            raise FormatError(f"labels must lie in [0, {self.class_count})")
        if not np.isfinite(X).all():
            raise FormatError("inputs must be finite")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def width(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.inputs[index], self.labels[index], self.class_count)


# ------------------------------------------------------------------------- IDX files

def _open_bytes(path: PathLike) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Decode an IDX image payload into an ``(n, rows*cols)`` array scaled to [0, 1]."""
    if len(raw) < 16:
        raise FormatError("IDX image file is truncated (header)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad IDX image magic 0x{magic:08x}")
    need = count * rows * cols
    if len(raw) - 16 < need:
        raise FormatError(f"IDX image file is truncated: need {need} pixel bytes, have {len(raw) - 16}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=need, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError("IDX label file is truncated (header)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad IDX label magic 0x{magic:08x}")
    if len(raw) - 8 < count:
        raise FormatError("IDX label file is truncated")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def read_idx(images_path: PathLike, labels_path: PathLike,
             class_count: Optional[int] = None) -> LabeledDataset:
    X = parse_idx_images(_open_bytes(images_path))
    y = parse_idx_labels(_open_bytes(labels_path))
    if len(X) != len(y):
        raise FormatError(f"{len(X)} images but {len(y)} labels")
    return LabeledDataset(X, y, class_count or int(y.max(initial=-1)) + 1)


def encode_idx(data: LabeledDataset, rows: int, cols: int) -> Tuple[bytes, bytes]:
    """Inverse of the readers; pixel values are rounded to the nearest byte."""
    if rows * cols != data.width:
        raise ValueError(f"{rows}x{cols} does not match width {data.width}")
    pixels = np.clip(np.rint(data.inputs * 255.0), 0, 255).astype(np.uint8)
    images = struct.pack(">IIII", IDX_IMAGES_MAGIC, len(data), rows, cols) + pixels.tobytes()
    labels = struct.pack(">II", IDX_LABELS_MAGIC, len(data)) + data.labels.astype(np.uint8).tobytes()
    return images, labels


# ------------------------------------------------------------------------- CSV files

def read_csv(path: PathLike, class_count: Optional[int] = None) -> LabeledDataset:
    """``label,f1,...,fD`` rows; a leading header row is skipped if present."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise EmptyDataError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise FormatError(f"{path}: rows must all have a label and the same number of features")
    try:
        table = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric field: {exc}") from exc
    labels = table[:, 0]
    if not np.array_equal(labels, np.round(labels)):
        raise FormatError(f"{path}: labels must be integers")
    y = labels.astype(np.int64)
    return LabeledDataset(table[:, 1:], y, class_count or int(y.max()) + 1)


def write_csv(data: LabeledDataset, path: PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"] + [f"f{i + 1}" for i in range(data.width)])
    for label, row in zip(data.labels, data.inputs):
        writer.writerow([int(label)] + [repr(float(v)) for v in row])
    write_atomic(path, buf.getvalue())


# --------------------------------------------------------------------- synthetic data

def make_blobs(n: int, dim: int = 2, classes: int = 2, spread: float = 0.06,
               seed: int = 0, centre_seed: int = 0) -> LabeledDataset:
    """Isotropic Gaussian clusters with centres drawn inside ``[0.2, 0.8]^dim``.

    The centres depend on ``centre_seed`` only, so draws with different
    ``seed`` come from one distribution. Samples are clipped into the unit
    cube. Labels cycle through the classes so every class is (nearly) equally
    represented.
    """
    centres = np.random.default_rng([centre_seed, dim, classes]).uniform(0.2, 0.8, size=(classes, dim))
    # push centres apart so the default spread leaves the clusters separable
    for _ in range(200):
        d = centres[:, None, :] - centres[None, :, :]
        dist = np.linalg.norm(d, axis=-1) + np.eye(classes)
        if dist.min() > 8 * spread or classes == 1:
            break
        force = (d / dist[..., None] ** 3).sum(axis=1)
        centres = np.clip(centres + 0.01 * force / np.abs(force).max(), 0.1, 0.9)
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    rng.shuffle(y)
    X = np.clip(centres[y] + rng.normal(0.0, spread, size=(n, dim)), 0.0, 1.0)
    return LabeledDataset(X, y, classes)


_GLYPHS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def _glyph(digit: int) -> np.ndarray:
    return np.array([[float(c) for c in row] for row in _GLYPHS[digit]])


def make_digits(n: int, seed: int = 0, noise: float = 0.04, dropout: float = 0.05) -> LabeledDataset:
    """Tiny 8x8 digit-like images (64 features).

    Each sample is a 5x7 glyph placed at a random offset, with random stroke
    intensity, stroke dropout, a light 3x3 blur and additive pixel noise.
    """
    rng = np.random.default_rng(seed)
    glyphs = [_glyph(d) for d in range(10)]
    kernel = np.array([[0.05, 0.1, 0.05], [0.1, 0.4, 0.1], [0.05, 0.1, 0.05]])
    y = np.arange(n) % 10
    rng.shuffle(y)
    X = np.empty((n, 64))
    for i, digit in enumerate(y):
        img = np.zeros((10, 10))
        r, c = rng.integers(0, 2), rng.integers(0, 4)
        strokes = glyphs[digit] * rng.uniform(0.6, 1.0)
        strokes = strokes * np.where(rng.random(strokes.shape) < dropout, 0.3, 1.0)
        img[1 + r:8 + r, 1 + c:6 + c] = strokes
        blurred = sum(kernel[a, b] * img[a:a + 8, b:b + 8] for a in range(3) for b in range(3))
        blurred = blurred / kernel[1, 1] * 0.8
        X[i] = np.clip(blurred + rng.normal(0.0, noise, size=(8, 8)), 0.0, 1.0).reshape(-1)
    return LabeledDataset(X, y, 10)


def load_dataset(path: str, fmt: str = "auto", labels_path: Optional[str] = None,
                 size: int = 1000, seed: int = 0, class_count: Optional[int] = None) -> LabeledDataset:
    """Load ``path`` as CSV, IDX (images + ``labels_path``) or ``synthetic:<name>``.

    Synthetic names are ``digits`` and ``blobs``; ``size`` and ``seed`` only
    apply to them.
    """
    if path.startswith("synthetic:") or fmt == "synthetic":
        name = path.split(":", 1)[1] if ":" in path else path
        if name == "digits":
            return make_digits(size, seed=seed)
        if name == "blobs":
            return make_blobs(size, seed=seed)
        raise FormatError(f"unknown synthetic dataset {name!r}")
    if fmt == "auto":
        lower = path.lower()
        fmt = "csv" if lower.endswith(".csv") else "idx" if labels_path else "csv"
    if fmt == "csv":
        return read_csv(path, class_count)
    if fmt == "idx":
        if labels_path is None:
            raise FormatError("IDX datasets need a labels file")
        return read_idx(path, labels_path, class_count)
    raise FormatError(f"unknown dataset format {fmt!r}")
