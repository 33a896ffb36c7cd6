"""Experiment runner: generate data, train, evaluate, emit metrics.

Subcommands:
  gen  -- write train/test data files in bAbI format
  run  -- train and evaluate one configuration, or a --grid of them

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from itertools import product
from pathlib import Path

from .data import (
    BabiFormatError,
    TASKS,
    TaskSpec,
    abstractize,
    entity_lexicon,
    generate,
    parse_babi,
    serialize,
)
from .model import ReasonerClassifier
from .training import NumericError

TEST_SET_SIZE = 1000
TEST_SEED_OFFSET = 1_000_003  # generated test split draws from a disjoint stream

GRID_LAYERS = (2, 3)
GRID_DNN_DEPTHS = (1, 2, 3)
GRID_AUX = ("none", "original", "abstract")

DEFAULTS = {
    "n": 1000,
    "data_dir": None,
    "layers": 2,
    "dnn_depth": 2,
    "pooling": "max",
    "aux": "none",
    "alpha": 0.5,
    "epochs": 50,
    "batch": 32,
    "hidden": 64,
    "embed": 32,
    "clip": 40.0,
    "seed": None,
    "out": None,
}

PAPER_SCALE = {"n": 10000, "epochs": 200}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="reasoner", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--task", choices=TASKS, required=True)
        p.add_argument("--n", type=int, help="number of training instances")
        p.add_argument("--data-dir", help="directory for data files")
        p.add_argument("--seed", type=int,
                       help="RNG seed (falls back to $REASONER_SEED, then 0)")
        p.add_argument("--config", help="flat key=value config file; flags win")

    gen = sub.add_parser("gen", help="write train/test bAbI-format files")
    common(gen)

    run = sub.add_parser("run", help="train and evaluate")
    common(run)
    run.add_argument("--layers", type=int)
    run.add_argument("--dnn-depth", type=int, dest="dnn_depth")
    run.add_argument("--pooling", choices=("max", "avg", "gating"))
    run.add_argument("--aux", choices=("none", "original", "abstract"))
    run.add_argument("--alpha", type=float)
    run.add_argument("--epochs", type=int)
    run.add_argument("--batch", type=int)
    run.add_argument("--hidden", type=int)
    run.add_argument("--embed", type=int)
    run.add_argument("--clip", type=float)
    run.add_argument("--out", help="metrics/summary output file (JSON lines)")
    run.add_argument("--grid", action="store_true",
                     help="sweep layers x dnn-depth x aux")
    run.add_argument("--paper-scale", action="store_true", dest="paper_scale",
                     help="use the full-scale settings (10K instances, 200 epochs)")
    return parser


def load_config_file(path):
    values = {}
    casts = {"n": int, "layers": int, "dnn_depth": int, "epochs": int,
             "batch": int, "hidden": int, "embed": int, "seed": int,
             "alpha": float, "clip": float}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS and key not in ("task", "pooling", "aux"):
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = casts[key](value) if key in casts else value
    return values


def resolve(args):
    """Merge flags > config file > defaults into a plain dict."""
    config = load_config_file(args.config) if args.config else {}
    merged = dict(DEFAULTS)
    merged.update(config)
    for key in vars(args):
        value = getattr(args, key)
        if key in merged and value is not None:
            merged[key] = value
    merged["task"] = args.task or config.get("task")
    if getattr(args, "paper_scale", False):
        for key, value in PAPER_SCALE.items():
            if getattr(args, key, None) is None and key not in config:
                merged[key] = value
    if merged["seed"] is None:
        merged["seed"] = int(os.environ.get("REASONER_SEED", "0"))
    return merged


def _file_pair(data_dir, task):
    base = Path(data_dir)
    return base / f"{task}_train.txt", base / f"{task}_test.txt"


def _generate_splits(task, n, seed):
    train = generate(TaskSpec(task=task, seed=seed), n)
    test = generate(TaskSpec(task=task, seed=seed + TEST_SEED_OFFSET), TEST_SET_SIZE)
    return train, test


def cmd_gen(cfg):
    if cfg["data_dir"] is None:
        cfg["data_dir"] = "."
    train, test = _generate_splits(cfg["task"], cfg["n"], cfg["seed"])
    train_path, test_path = _file_pair(cfg["data_dir"], cfg["task"])
    train_path.parent.mkdir(parents=True, exist_ok=True)
    train_path.write_text(serialize(train), encoding="utf-8")
    test_path.write_text(serialize(test), encoding="utf-8")
    print(f"wrote {len(train)} instances to {train_path}")
    print(f"wrote {len(test)} instances to {test_path}")
    return 0


def _load_or_generate(cfg):
    if cfg["data_dir"]:
        train_path, test_path = _file_pair(cfg["data_dir"], cfg["task"])
        if train_path.exists() and test_path.exists():
            train = parse_babi(train_path.read_text(encoding="utf-8"))
            test = parse_babi(test_path.read_text(encoding="utf-8"))
            return train, test
    return _generate_splits(cfg["task"], cfg["n"], cfg["seed"])


def _run_cell(cfg, train, test, sink):
    aux = cfg["aux"]
    alpha = cfg["alpha"] if aux != "none" else 0.0
    if aux == "abstract":
        lexicon = entity_lexicon(TaskSpec(task=cfg["task"]))
        train = [abstractize(inst, lexicon) for inst in train]
    clf = ReasonerClassifier(
        layers=cfg["layers"], dnn_depth=cfg["dnn_depth"], pooling=cfg["pooling"],
        hidden_size=cfg["hidden"], embed_dim=cfg["embed"], aux=aux, alpha=alpha,
        epochs=cfg["epochs"], batch_size=cfg["batch"], clip_norm=cfg["clip"],
        seed=cfg["seed"],
    )
    clf.fit(train, eval_set=test)
    accuracies = [m.test_accuracy for m in clf.history_]
    for metrics in clf.history_:
        sink(metrics.to_record())
    summary = {
        "task": cfg["task"],
        "n_train": len(train),
        "L": cfg["layers"],
        "dnn_depth": cfg["dnn_depth"],
        "aux": aux,
        "alpha": alpha,
        "best_acc": max(accuracies),
        "final_acc": accuracies[-1],
        "seed": cfg["seed"],
    }
    sink(summary)
    print(json.dumps(summary))
    return summary


def cmd_run(cfg):
    train, test = _load_or_generate(cfg)
    out_file = open(cfg["out"], "a", encoding="utf-8") if cfg["out"] else None
    try:
        def sink(record):
            if out_file is not None:
                out_file.write(json.dumps(record) + "\n")

        if cfg["grid"]:
            for layers, depth, aux in product(GRID_LAYERS, GRID_DNN_DEPTHS, GRID_AUX):
                cell = dict(cfg, layers=layers, dnn_depth=depth, aux=aux)
                _run_cell(cell, train, test, sink)
        else:
            _run_cell(cfg, train, test, sink)
    finally:
        if out_file is not None:
            out_file.close()
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
        if cfg["task"] is None:
            raise UsageError("--task is required")
        cfg["grid"] = getattr(args, "grid", False)
        if args.command == "gen":
            return cmd_gen(cfg)
        return cmd_run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (BabiFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
