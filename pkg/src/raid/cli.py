"""Command-line entry point: ``raid <command> [options]``.

Commands
--------
train-net  train a network and save it as JSON
attack     run attacks on correctly classified inputs, write CSV + manifest
fit        fingerprint, filter, select and train a detector or a pool
detect     score inputs, one verdict line per input
eval       run an experiment matrix, write JSON + text tables
sweep      neuron-count sweep (``eval`` with ``experiment = sweep``)

Exit status is 0 on success, 1 for usage errors and 2 for data or
validation errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluation as ev
from . import nn
from ._io import dump_json, write_atomic
from .attacks import (AdversarialSet, default_attacks, generate_attack_set, load_adversarial_set,
                      noisy_normals, save_adversarial_set)
from .config import EXPERIMENTS, ExperimentConfig, apply_overrides, load_config
from .datasets import LabeledDataset, load_dataset
from .detectors import (DECISION_THRESHOLD, DetectorPool, DetectorSpec, build_pool,
                        detect_full, load_detector, pool_scores, save_detector, train_detector)
from .errors import EmptyDataError, RaidError
from .fingerprint import (ActivationMatrix, filter_inessential, mean_diff, mean_fingerprint,
                          select_monitored, write_diagnostics_csv)
from .rng import PCG32

log = logging.getLogger("raid")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default; usage problems are 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# ------------------------------------------------------------------ shared helpers

def _load_data(path, fmt="auto", labels=None, size=1000, seed=0) -> LabeledDataset:
    return load_dataset(path, fmt, labels, size, seed)


def _correct_only(net, data: LabeledDataset):
    keep = np.flatnonzero(nn.predict_classes(net, data.inputs) == data.labels)
    if keep.size == 0:
        raise EmptyDataError("the network misclassifies every input")
    return data.subset(keep), keep


def resolve_attack_names(text: str, known) -> List[str]:
    """Map a comma list of attack labels or norm groups (any case) to labels."""
    names = _csv_list(text)
    if not names or [n.lower() for n in names] == ["none"]:
        raise UsageError("no attacks selected")
    lookup = {k.lower(): k for k in known}
    groups = {g.lower(): g for g in ev.NORM_GROUPS}
    out = []
    for n in names:
        if n.lower() in groups:
            labels = ev.NORM_GROUPS[groups[n.lower()]]
        elif n.lower() in lookup:
            labels = (lookup[n.lower()],)
        else:
            raise RaidError(f"unknown attack {n!r}; known: {', '.join(sorted(known))}")
        out += [x for x in labels if x not in out]
    return out


def _experiment_config(args, experiment=None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    over = {"seed": args.seed, "threads": args.threads, "out": args.out}
    for key in ("experiment", "repetitions", "k", "filtering_threshold", "pool_size", "selection",
                "network", "train_data", "test_data", "train_size", "test_size", "data_seed",
                "max_normals", "epochs"):
        over[key] = getattr(args, key, None)
    for key in ("train_attacks", "test_attacks", "groups", "sweep_modes"):
        value = getattr(args, key, None)
        over[key] = _csv_list(value) if value else None
    if getattr(args, "neurons_list", None):
        over["neurons"] = [int(v) for v in _csv_list(args.neurons_list)]
    if getattr(args, "detector", None):
        over["detector"] = DetectorSpec.parse(args.detector, seed=cfg.detector.seed)
    if experiment:
        over["experiment"] = experiment
    return apply_overrides(cfg, over)


# ------------------------------------------------------------------------- commands

def cmd_train_net(args) -> int:
    data = _load_data(args.data, args.format, args.labels, args.size, args.data_seed)
    test = None
    if args.test_data:
        test = _load_data(args.test_data, args.format, args.test_labels, args.test_size, args.data_seed + 1)
    widths = (data.width,) + tuple(int(h) for h in _csv_list(args.hidden)) + (data.class_count,)
    net = nn.init_network(widths, seed=args.seed)
    net, report = nn.train(net, data, nn.TrainConfig(args.epochs, args.batch_size, args.lr,
                                                     args.optimizer, args.seed), test)
    out = Path(args.out)
    path = out if out.suffix == ".json" else out / "network.json"
    nn.save_network(net, path)
    print(f"train accuracy {report.train_accuracy:.4f}")
    if report.test_accuracy is not None:
        print(f"test accuracy {report.test_accuracy:.4f}")
    print(f"network written to {path}")
    return EXIT_OK


def cmd_attack(args) -> int:
    attacks = default_attacks(args.seed)
    if args.config:
        attacks = load_config(args.config).attacks
        attacks = {k: replace(v, seed=args.seed) for k, v in attacks.items()}
    labels = resolve_attack_names(args.attacks, attacks)
    net = nn.load_network(args.network)
    data = _load_data(args.data, args.format, args.labels, args.size, args.data_seed)
    normals, index = _correct_only(net, data)
    cfgs = [attacks[a] for a in labels]
    real = [c for c in cfgs if c.kind != "NOISE"]
    parts = []
    if real:
        parts.append(generate_attack_set(net, normals, real, index=index))
    for c in cfgs:
        if c.kind == "NOISE":
            parts.append(noisy_normals(net, normals, c, index=index))
    adv = AdversarialSet.concat(parts, net.input_width)
    groups = {}
    for c in cfgs:
        groups.setdefault(c.norm or "control", []).append(c.label)
    out = Path(args.out)
    extra = {"groups": groups, "network": str(args.network), "data": str(args.data),
             "normals": len(normals), "seed": args.seed}
    save_adversarial_set(adv, cfgs, out / "adversarial.csv", out / "manifest.json", extra)
    for g, members in groups.items():
        counts = ", ".join(f"{m} {adv.counts[m].get('succeeded', adv.counts[m].get('kept'))}"
                           f"/{adv.counts[m]['attempted']}" for m in members)
        print(f"{g}: {counts}")
    print(f"adversarial set written to {out / 'adversarial.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    net = nn.load_network(args.network)
    data = _load_data(args.data, args.format, args.labels, args.size, args.data_seed)
    normals, _ = _correct_only(net, data)
    adv = load_adversarial_set(args.adversarial)
    if args.attacks:
        adv = adv.select(resolve_attack_names(args.attacks, set(adv.attack.tolist()) | set(default_attacks())))
    adv = adv.select([a for a in set(adv.attack.tolist()) if a != ev.NOISE_LABEL])
    if len(adv) == 0:
        raise EmptyDataError("the adversarial set has no adversarial inputs")
    ids = net.neuron_ids
    normal_rows = nn.hidden_activations(net, normals.inputs)
    adv_rows = nn.hidden_activations(net, adv.inputs)
    diff = mean_diff(mean_fingerprint(ActivationMatrix(ids, normal_rows)),
                     mean_fingerprint(ActivationMatrix(ids, adv_rows)))
    essential = filter_inessential(diff, args.filter, ids)
    X = np.concatenate([normal_rows, adv_rows])
    y = np.r_[np.zeros(len(normal_rows), np.int64), np.ones(len(adv_rows), np.int64)]
    spec = DetectorSpec.parse(args.detector, seed=args.seed)
    if args.pool_size > 1:
        k = min(args.neurons, len(essential))
        obj = build_pool(spec, essential, k, args.pool_size, ActivationMatrix(ids, X), y, args.seed)
    else:
        ms = select_monitored(essential, args.neurons, args.selection, diff, args.seed, ids)
        pos = {n: j for j, n in enumerate(ids)}
        obj = train_detector(spec, X[:, [pos[n] for n in ms.ids]], y, ms)
    config = {"network": str(args.network), "data": str(args.data), "adversarial": str(args.adversarial),
              "attacks": sorted(set(adv.attack.tolist())), "filtering_threshold": args.filter,
              "k": args.neurons, "selection": args.selection, "detector": spec.to_dict(),
              "pool_size": args.pool_size, "seed": args.seed, "normals": len(normals),
              "adversarials": len(adv), "essential": len(essential)}
    out = Path(args.out)
    path = out if out.suffix == ".json" else out / "detector.json"
    save_detector(obj, path, ids, config)
    if args.diagnostics:
        write_diagnostics_csv(ids, diff, path.with_name(path.stem + "_neurons.csv"))
    kind = f"pool of {args.pool_size}" if args.pool_size > 1 else spec.label
    print(f"{kind} trained on {len(normals)} normal and {len(adv)} adversarial fingerprints "
          f"({len(essential)} essential neurons)")
    print(f"detector written to {path}")
    return EXIT_OK


def _load_inputs(args):
    if args.data.endswith(".csv"):
        with open(args.data) as fh:
            head = fh.readline()
        if head.startswith("source_index,"):
            adv = load_adversarial_set(args.data)
            return adv.inputs
    return _load_data(args.data, args.format, args.labels, args.size, args.data_seed).inputs


def cmd_detect(args) -> int:
    net = nn.load_network(args.network)
    obj, ids = load_detector(args.detector)
    if ids and tuple(ids) != tuple(net.neuron_ids):
        raise RaidError("detector was trained on a network with different hidden neurons")
    X = _load_inputs(args)
    if args.limit is not None:
        X = X[:args.limit]
    preds = nn.predict_classes(net, X)
    rows = nn.hidden_activations(net, X)
    if isinstance(obj, DetectorPool):
        scores, members = pool_scores(obj, rows, PCG32(args.seed, ev.QUERY_STREAM))
        for i, (p, s, m) in enumerate(zip(preds, scores, members)):
            verdict = "adversarial" if s >= DECISION_THRESHOLD else "normal"
            print(f"{i}\t{int(p)}\tmember={int(m)}\t{verdict}")
    else:
        scores = detect_full(obj, rows, net.neuron_ids)
        for i, (p, s) in enumerate(zip(preds, scores)):
            verdict = "adversarial" if s >= DECISION_THRESHOLD else "normal"
            print(f"{i}\t{int(p)}\t{float(s):.6f}\t{verdict}")
    return EXIT_OK


def _write_result(result: ev.ExperimentResult, cfg: ExperimentConfig, roc: bool) -> Path:
    out = Path(cfg.out)
    write_atomic(out / f"{result.kind}.json", dump_json(result.payload, sort_keys=False))
    write_atomic(out / f"{result.kind}.txt", result.text)
    if roc:
        for r, rep in enumerate(result.reports):
            write_atomic(out / f"{result.kind}_roc_{r}.csv", ev.roc_csv(rep))
    return out / f"{result.kind}.json"


def cmd_eval(args, experiment=None) -> int:
    cfg = _experiment_config(args, experiment)
    result = ev.run_experiment(cfg)
    path = _write_result(result, cfg, getattr(args, "roc", False))
    sys.stdout.write(result.text)
    print(f"report written to {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    return cmd_eval(args, experiment="sweep")


# ---------------------------------------------------------------------------- parser

def _data_flags(p, required=True):
    p.add_argument("--data", required=required, help="CSV, IDX images, or synthetic:digits / synthetic:blobs")
    p.add_argument("--format", default="auto", choices=("auto", "csv", "idx", "synthetic"))
    p.add_argument("--labels", help="IDX labels file")
    p.add_argument("--size", type=int, default=1000, help="sample count for synthetic data")
    p.add_argument("--data-seed", type=int, default=1)


def _experiment_flags(p):
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--train-attacks", help="comma list of attacks or norm groups")
    p.add_argument("--test-attacks", help="comma list of attacks or norm groups")
    p.add_argument("--neurons", dest="k", type=int, help="monitored neurons k")
    p.add_argument("--filter", dest="filtering_threshold", type=float)
    p.add_argument("--detector", help="DT, RF32, AB64, KNN3, ...")
    p.add_argument("--pool-size", type=int)
    p.add_argument("--selection", choices=("random", "best", "worst"))
    p.add_argument("--network", help="use this network instead of training one")
    p.add_argument("--train-data")
    p.add_argument("--test-data")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-normals", type=int, help="cap normals per half")
    p.add_argument("--groups", help="norm groups for matrix experiments")
    p.add_argument("--roc", action="store_true", help="write ROC CSV per repetition (single only)")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None, help="base seed")
    shared.add_argument("--config", help="INI-style config file")
    shared.add_argument("--out", default=None, help="output directory or file")
    shared.add_argument("--threads", type=int, default=None)
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="raid", description="Activation-fingerprint adversarial input detection.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train-net", parents=[shared], help="train a network")
    _data_flags(p)
    p.add_argument("--test-data")
    p.add_argument("--test-labels")
    p.add_argument("--test-size", type=int, default=400)
    p.add_argument("--hidden", default="256,128")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--optimizer", default="sgd", choices=("sgd", "adam"))
    p.set_defaults(func=cmd_train_net)

    p = sub.add_parser("attack", parents=[shared], help="generate adversarial inputs")
    p.add_argument("--network", required=True)
    _data_flags(p)
    p.add_argument("--attacks", required=True, help="comma list, e.g. fgsm,pgd,bim or Linf")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("fit", parents=[shared], help="train a detector or a detector pool")
    p.add_argument("--network", required=True)
    _data_flags(p)
    p.add_argument("--adversarial", required=True, help="adversarial-set CSV from `attack`")
    p.add_argument("--attacks", help="restrict training to these attacks")
    p.add_argument("--filter", type=float, default=0.5, help="filtering threshold")
    p.add_argument("--neurons", type=int, default=64, help="monitored neurons k")
    p.add_argument("--selection", default="random", choices=("random", "best", "worst"))
    p.add_argument("--detector", default="RF32")
    p.add_argument("--pool-size", type=int, default=1)
    p.add_argument("--diagnostics", action="store_true", help="write per-neuron difference CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", parents=[shared], help="classify inputs as normal or adversarial")
    p.add_argument("--network", required=True)
    p.add_argument("--detector", required=True)
    _data_flags(p)
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[shared], help="run an experiment")
    _experiment_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[shared], help="neuron-count sweep")
    _experiment_flags(p)
    p.add_argument("--neurons-list", help="k values, e.g. 1,4,16,64,256")
    p.add_argument("--sweep-modes", help="comma list of random,best,worst")
    p.set_defaults(func=cmd_sweep)
    return parser


_PER_COMMAND_DEFAULTS = {"train-net": "results", "attack": "results/attack", "fit": "results",
                         "detect": None}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command not in ("eval", "sweep"):
        # eval/sweep leave unset flags to the config file
        args.seed = 0 if args.seed is None else args.seed
        args.out = args.out or _PER_COMMAND_DEFAULTS.get(args.command)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"raid: error: {exc}\n")
    except BrokenPipeError:
        # output piped into e.g. head; stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (RaidError, ValueError, OSError) as exc:
        print(f"raid: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
