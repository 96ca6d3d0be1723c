"""Experiment configuration: defaults, INI-style config files, overrides.

A config file is plain ``key = value`` lines under ``[experiment]``; values
are parsed as JSON where possible (numbers, booleans, lists) and otherwise
taken as strings. Attack settings go in ``[attack.<LABEL>]`` sections and
override the defaults of that attack, or define a new one when ``kind`` is
given::

    [experiment]
    experiment = cross-norm
    repetitions = 8
    train_attacks = ["Linf"]

    [attack.CW]
    binary_search_steps = 5
"""
from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

from .attacks import AttackConfig, default_attacks
from .detectors import DetectorSpec
from .errors import FormatError

EXPERIMENTS = ("single", "per-attack", "all-to-subset", "within-norm", "cross-norm", "pool",
               "classifiers", "auxiliary", "sweep")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "single"
    train_data: str = "synthetic:digits"
    train_format: str = "auto"
    train_labels: Optional[str] = None
    test_data: str = "synthetic:digits"
    test_format: str = "auto"
    test_labels: Optional[str] = None
    train_size: int = 4000
    test_size: int = 1400
    data_seed: int = 1
    network: Optional[str] = None
    hidden: Tuple[int, ...] = (256, 128)
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 32
    optimizer: str = "sgd"
    attacks: Dict[str, AttackConfig] = field(default_factory=default_attacks)
    train_attacks: Tuple[str, ...] = ("Linf",)
    test_attacks: Tuple[str, ...] = ("Linf",)
    filtering_threshold: float = 0.5
    k: int = 64
    selection: str = "random"
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    pool_size: int = 1
    repetitions: int = 8
    seed: int = 0
    max_normals: Optional[int] = None
    neurons: Tuple[int, ...] = (1, 4, 16, 64, 256)
    sweep_modes: Tuple[str, ...] = ("random", "best", "worst")
    groups: Tuple[str, ...] = ("Lstar", "Linf", "L2", "L0")
    threads: int = 1
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise FormatError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not 0.0 <= self.filtering_threshold <= 1.0:
            raise FormatError("filtering_threshold must lie in [0, 1]")
        if self.k < 1 or self.pool_size < 1 or self.repetitions < 1:
            raise FormatError("k, pool_size and repetitions must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attacks"] = {k: v.to_dict() for k, v in self.attacks.items()}
        d["detector"] = self.detector.to_dict()
        d.pop("out")
        d.pop("threads")
        return d


_TUPLE_FIELDS = {"hidden", "train_attacks", "test_attacks", "neurons", "sweep_modes", "groups"}


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
            if name in ("hidden", "neurons"):
                value = [int(v) for v in value]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(value)
    if name == "detector":
        if isinstance(value, DetectorSpec):
            return value
        if isinstance(value, dict):
            return DetectorSpec.from_dict(value)
        return DetectorSpec.parse(str(value))
    return value


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Return ``cfg`` with the given fields replaced; ``None`` values are ignored."""
    known = {f.name for f in fields(ExperimentConfig)}
    clean = {}
    for key, value in overrides.items():
        if value is None:
            continue
        key = key.replace("-", "_")
        if key not in known:
            raise FormatError(f"unknown config key {key!r}")
        clean[key] = _coerce(key, value)
    return replace(cfg, **clean)


def load_config(path: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    cfg = base or ExperimentConfig()
    if parser.has_section("experiment"):
        cfg = apply_overrides(cfg, {k: _parse_value(v) for k, v in parser.items("experiment")})
    if parser.has_section("detector"):
        spec = DetectorSpec.from_dict({**cfg.detector.to_dict(),
                                       **{k: _parse_value(v) for k, v in parser.items("detector")}})
        cfg = replace(cfg, detector=spec)
    attacks = dict(cfg.attacks)
    for section in parser.sections():
        if not section.startswith("attack."):
            continue
        label = section.split(".", 1)[1]
        values = {k: _parse_value(v) for k, v in parser.items(section)}
        if label in attacks:
            base_cfg = attacks[label].to_dict()
        elif "kind" in values:
            base_cfg = {"name": label}
        else:
            raise FormatError(f"[{section}] defines a new attack but gives no kind")
        try:
            attacks[label] = AttackConfig.from_dict({**base_cfg, **values})
        except (TypeError, ValueError) as exc:
            raise FormatError(f"[{section}]: {exc}") from exc
    return replace(cfg, attacks=attacks)
