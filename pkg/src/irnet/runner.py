"""Driving a configured training run: data, epochs, checkpoints and metrics CSV."""

from __future__ import annotations

import csv
import logging
from pathlib import Path


from .checkpoint import create_state, save_checkpoint
from .config import RunConfig
from .data import input_shape, load_dataset
from .libra import bernoulli_entropy, sign_binarize
from .nn.train import TrainState, evaluate, train_epoch

log = logging.getLogger(__name__)

NUM_CLASSES = 10


def layer_entropies(state: TrainState) -> dict:
    """Sign entropy ratio of the quantized weights of every binary layer."""
    out = {}
    for layer in state.model.binary_layers():
        signs = sign_binarize(layer.quantized().pre)
        out[layer.name] = bernoulli_entropy(signs).ratio
    return out


def metric_columns(arm: str, layer_names) -> list:
    base = ["epoch", "loss", "train_acc", "test_acc", "t", "k", "lr"]
    cols = [f"{arm}/{c}" for c in base]
    cols += [f"{arm}/entropy_ratio/{name}" for name in layer_names]
    return cols


def load_data(config: RunConfig):
    directory = config.path or None
    train = load_dataset(config.dataset, directory, "train")
    test = load_dataset(config.dataset, directory, "test")
    if config.train_limit:
        train = train.subset(config.train_limit)
    if config.test_limit:
        test = test.subset(config.test_limit)
    return train, test


def run_training(config: RunConfig, out_dir=None, data=None, state: TrainState | None = None):
    """Train for ``config.epochs`` epochs, writing checkpoints and ``metrics.csv``.

    Returns ``(state, rows)`` where ``rows`` is the list of per-epoch metrics.
    With ``epochs = 0`` only the initial checkpoint is written.
    """
    out = Path(out_dir or config.dir)
    out.mkdir(parents=True, exist_ok=True)
    if data is None:
        train, test = (None, None) if config.epochs == 0 and state is None else load_data(config)
    else:
        train, test = data
    if state is None:
        shape = train.images.shape[1:] if train is not None else input_shape(config.dataset)
        state = create_state(config, tuple(shape), NUM_CLASSES)
    (out / "config.ini").write_text(config.to_text(), encoding="utf-8")
    arm = state.meta.get("arm", config.arm)
    names = [l.name for l in state.model.binary_layers()]
    columns = metric_columns(arm, names)
    rows = []
    if state.epoch == 0:
        save_checkpoint(state, out / "checkpoint_initial.irbn")
    if config.epochs == 0:
        save_checkpoint(state, out / "checkpoint.irbn")
        _write_csv(out / "metrics.csv", columns, rows)
        return state, rows
    while state.epoch < config.epochs:
        m = train_epoch(state, train.images, train.labels)
        m["test_acc"] = evaluate(state.model, test.images, test.labels) if test is not None else float("nan")
        ent = layer_entropies(state)
        row = {f"{arm}/{k}": m[k] for k in ("epoch", "loss", "train_acc", "test_acc", "t", "k", "lr")}
        row.update({f"{arm}/entropy_ratio/{n}": ent[n] for n in names})
        rows.append(row)
        log.info("%s epoch %d test_acc %.4f", arm, m["epoch"], m["test_acc"])
        if config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            save_checkpoint(state, out / "checkpoint.irbn")
        _write_csv(out / "metrics.csv", columns, rows)
    save_checkpoint(state, out / "checkpoint.irbn")
    return state, rows


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) and not k.endswith("/epoch") else v)
                        for k, v in row.items()})


def final_accuracy(rows) -> float:
    if not rows:
        return float("nan")
    return float(next(v for k, v in rows[-1].items() if k.endswith("/test_acc")))
