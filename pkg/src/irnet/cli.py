"""Command-line entry point: ``irnet train|eval|export|bench|inspect``.

Failures exit nonzero and write one JSON line to stderr:
``{"error": "<category>", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .arms import ARMS
from .bench import SUITES, format_table, rows_to_dicts, run_suite
from .bitkernel.export import export_model, model_size_report, packed_infer
from .checkpoint import load_any, load_checkpoint, save_packed
from .config import RunConfig
from .data import load_dataset
from .ede import ESTIMATORS
from .errors import ConfigError, IRNetError
from .report import inspect_model, inspect_packed
from .runner import run_training

EXIT_CODES = {"usage": 2, "config": 2, "format": 3, "io": 4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="irnet", description="Binary network training, packed inference and inspection.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--estimator", choices=ESTIMATORS)
    t.add_argument("--arm", choices=sorted(ARMS))
    t.add_argument("--epochs", type=int)
    t.add_argument("--data", help="dataset directory (default: $IRNET_DATA)")
    t.add_argument("--out", help="output directory (default: [output] dir)")

    e = sub.add_parser("eval", help="top-1 accuracy of a checkpoint or packed model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", help="dataset directory (default: $IRNET_DATA)")
    e.add_argument("--dataset", help="dataset name (default: from the model metadata)")
    e.add_argument("--split", default="test", choices=("train", "test"))
    e.add_argument("--limit", type=int, default=0)

    x = sub.add_parser("export", help="freeze a checkpoint into a packed model file")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="packed vs naive float GEMM timings")
    b.add_argument("--suite", default="gemm", choices=sorted(SUITES))
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--no-shift", action="store_true", help="time the kernel without 2**s scaling")
    b.add_argument("--json", help="also write the rows as JSON to this path")

    i = sub.add_parser("inspect", help="per-layer entropy, histograms and op counts")
    i.add_argument("--model", required=True)
    i.add_argument("--json", help="write the full report as JSON")
    i.add_argument("--csv", help="write the per-layer table as CSV (histograms go to <stem>_hist.csv)")
    i.add_argument("--data", help="dataset directory for activation entropy (checkpoints only)")
    i.add_argument("--limit", type=int, default=1000)
    i.add_argument("--mode", default="ours", choices=("ours", "xnor"))
    return p


def cmd_train(args):
    config = RunConfig.load(args.config)
    changes = {k: v for k, v in (("seed", args.seed), ("estimator", args.estimator), ("arm", args.arm),
                                 ("epochs", args.epochs), ("path", args.data), ("dir", args.out))
               if v is not None}
    config = config.replace(**changes)
    state, rows = run_training(config)
    out = Path(config.dir)
    summary = {"arm": config.arm, "epochs": state.epoch, "checkpoint": str(out / "checkpoint.irbn"),
               "metrics": str(out / "metrics.csv")}
    if rows:
        summary["test_acc"] = rows[-1][f"{state.meta['arm']}/test_acc"]
    print(json.dumps(summary))
    return 0


def _dataset_name(meta, override):
    name = override or meta.get("dataset")
    if not name:
        raise ConfigError("model metadata has no dataset; pass --dataset")
    return name


def cmd_eval(args):
    packed, state = load_any(args.model)
    ds = load_dataset(_dataset_name(packed.metadata, args.dataset), args.data, args.split)
    if args.limit:
        ds = ds.subset(args.limit)
    logits = packed_infer(packed, ds.images)
    acc = float(np.mean(logits.argmax(axis=1) == ds.labels))
    print(json.dumps({"model": args.model, "dataset": ds.name, "samples": len(ds), "top1": acc}))
    return 0


def cmd_export(args):
    state = load_checkpoint(args.checkpoint)
    packed = export_model(state.model, np.float32, metadata={**state.meta, "trained_epochs": state.epoch})
    save_packed(packed, args.out)
    print(json.dumps({"out": args.out, **model_size_report(packed)}))
    return 0


def cmd_bench(args):
    rows = run_suite(args.suite, reps=args.reps, shifts=not args.no_shift)
    print(f"suite={args.suite} reps={args.reps} shifts={not args.no_shift} threads=1")
    print(format_table(rows))
    if args.json:
        Path(args.json).write_text(json.dumps(rows_to_dicts(rows), indent=2), encoding="utf-8")
    return 0


def cmd_inspect(args):
    packed, state = load_any(args.model)
    if state is not None:
        x = None
        if args.data:
            ds = load_dataset(_dataset_name(state.meta, None), args.data, "test").subset(args.limit)
            x = ds.images
        report = inspect_model(state.model, x, args.mode, source=args.model)
    else:
        report = inspect_packed(packed, args.mode, source=args.model)
    print(report.summary())
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        path = Path(args.csv)
        path.write_text(report.to_csv(), encoding="utf-8")
        path.with_name(path.stem + "_hist.csv").write_text(report.histogram_csv(), encoding="utf-8")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "export": cmd_export, "bench": cmd_bench,
            "inspect": cmd_inspect}


def _fail(category, message):
    sys.stderr.write(json.dumps({"error": category, "message": str(message)}) + "\n")
    return EXIT_CODES.get(category, 1)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail("usage", exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except IRNetError as exc:
        return _fail(exc.category, exc)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("io", exc)


if __name__ == "__main__":
    sys.exit(main())
