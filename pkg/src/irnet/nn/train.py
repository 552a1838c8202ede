"""Loss, optimizer and the epoch-level training and evaluation loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..ede import EdeSchedule, schedule_at
from ..errors import DomainError
from ..tensor import DTYPE
from .layers import Context
from .model import Model

log = logging.getLogger(__name__)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to ``logits``."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DomainError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DomainError(f"label out of range [0, {c})")
    logp = log_softmax(logits)
    loss = -float(np.mean(logp[np.arange(n), labels]))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay.

    Weight decay is applied only to full-precision weight matrices unless
    ``decay_binary`` is set; batchnorm parameters and biases are never decayed.
    """

    def __init__(self, lr=0.1, momentum=0.9, weight_decay=1e-4, decay_binary=False):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.decay_binary = decay_binary
        self.velocity: dict[str, np.ndarray] = {}

    def _decays(self, layer, name):
        if name != "weight" or self.weight_decay == 0:
            return False
        return self.decay_binary or not layer.kind.startswith("binary")

    def step(self, model: Model, lr=None):
        lr = self.lr if lr is None else lr
        for layer, name, w in model.parameters():
            g = layer.grads.get(name)
            if g is None:
                continue
            if self._decays(layer, name):
                g = g + self.weight_decay * w
            key = f"{layer.name}/{name}"
            if self.momentum:
                v = self.velocity.get(key)
                v = g.copy() if v is None else self.momentum * v + g
                self.velocity[key] = v
                g = v
            w -= lr * g


def sgd_step(model: Model, optimizer: SGD, lr=None):
    optimizer.step(model, lr)


@dataclass
class TrainState:
    model: Model
    optimizer: SGD
    rng: np.random.Generator
    schedule: EdeSchedule
    estimator: str = "ede"
    epoch: int = 0
    batch_size: int = 64
    lr_milestones: tuple = ()
    lr_gamma: float = 0.1
    augment: bool = False
    meta: dict = field(default_factory=dict)

    def lr_at(self, epoch):
        drops = sum(1 for m in self.lr_milestones if epoch >= m)
        return self.optimizer.lr * self.lr_gamma**drops


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def augment_batch(x, rng, pad=4):
    """Random crop after zero padding plus horizontal flip, per sample."""
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dy = rng.integers(0, 2 * pad + 1, size=n)
    dx = rng.integers(0, 2 * pad + 1, size=n)
    flip = rng.random(n) < 0.5
    out = np.empty_like(x)
    for i in range(n):
        crop = padded[i, :, dy[i] : dy[i] + h, dx[i] : dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def train_epoch(state: TrainState, x, y, sched: EdeSchedule | None = None):
    """One shuffled pass over ``(x, y)``; returns epoch metrics."""
    n = len(x)
    if n == 0:
        raise DomainError("empty dataset")
    sched = sched or state.schedule
    params = schedule_at(sched, min(state.epoch, sched.total_epochs))
    lr = state.lr_at(state.epoch)
    ctx = Context(training=True, params=params, estimator=state.estimator)
    order = state.rng.permutation(n)
    total_loss = 0.0
    correct = 0
    for idx in _batches(n, state.batch_size, order):
        xb = np.asarray(x[idx], dtype=DTYPE)
        if state.augment:
            xb = augment_batch(xb, state.rng)
        yb = np.asarray(y[idx])
        state.model.zero_grad()
        logits = state.model.forward(xb, ctx)
        loss, grad = cross_entropy(logits, yb)
        state.model.backward(grad)
        state.optimizer.step(state.model, lr)
        total_loss += loss * len(idx)
        correct += int(np.sum(logits.argmax(axis=1) == yb))
    state.epoch += 1
    metrics = {
        "epoch": state.epoch,
        "loss": total_loss / n,
        "train_acc": correct / n,
        "t": params.t,
        "k": params.k,
        "lr": lr,
    }
    log.info("epoch %d loss %.4f train_acc %.4f t %.3f k %.3f", state.epoch, metrics["loss"],
             metrics["train_acc"], params.t, params.k)
    return metrics


def predict_logits(model: Model, x, batch_size=500, trace=None):
    """Eval-mode forward (running batchnorm statistics, binarization active)."""
    outs = []
    for start in range(0, len(x), batch_size):
        ctx = Context(training=False, trace={} if trace is not None else None)
        outs.append(model.forward(np.asarray(x[start : start + batch_size], dtype=DTYPE), ctx))
        if trace is not None:
            for k, v in ctx.trace.items():
                trace.setdefault(k, []).append(v)
    if trace is not None:
        for k in list(trace):
            trace[k] = np.concatenate(trace[k])
    return np.concatenate(outs) if outs else np.zeros((0, model.output_dim[0]))


def evaluate(model: Model, x, y, batch_size=500):
    if len(x) == 0:
        raise DomainError("empty dataset")
    logits = predict_logits(model, x, batch_size)
    return float(np.mean(logits.argmax(axis=1) == np.asarray(y)))
