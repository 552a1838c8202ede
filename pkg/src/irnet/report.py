"""Per-layer inspection of binarized weights: entropy, histograms, error, op counts."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .bitkernel.export import PackedModel
from .bitkernel.packing import unpack
from .libra import bernoulli_entropy, entropy_from_fraction, quantization_error, sign_binarize
from .nn.layers import Context
from .nn.model import Model, count_ops
from .tensor import DTYPE

HIST_BINS = 64
HIST_SIGMAS = 4.0


@dataclass
class LayerReport:
    layer: str
    kind: str
    n_weights: int
    p_hat: float
    entropy_nats: float
    entropy_ratio: float
    quantization_error: float | None = None
    hist_edges: list | None = None
    hist_counts: list | None = None
    float_ops: int = 0
    bitwise_ops: int = 0
    activation_p_hat: float | None = None
    activation_entropy_ratio: float | None = None


@dataclass
class InspectionReport:
    source: str
    layers: list = field(default_factory=list)

    def to_dict(self):
        return {"source": self.source, "layers": [asdict(l) for l in self.layers]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        cols = ["layer", "kind", "n_weights", "p_hat", "entropy_nats", "entropy_ratio",
                "quantization_error", "float_ops", "bitwise_ops", "activation_p_hat",
                "activation_entropy_ratio"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for l in self.layers:
            w.writerow(asdict(l))
        return buf.getvalue()

    def histogram_csv(self) -> str:
        """Long-form weight histograms: one row per (layer, bin)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "bin_left", "bin_right", "count"])
        for l in self.layers:
            if l.hist_counts is None:
                continue
            for i, c in enumerate(l.hist_counts):
                w.writerow([l.layer, l.hist_edges[i], l.hist_edges[i + 1], c])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{'layer':>8} {'kind':>14} {'n':>8} {'p_hat':>7} {'H/ln2':>7} {'J':>12} {'bitwise ops':>14}"]
        for l in self.layers:
            j = f"{l.quantization_error:12.2f}" if l.quantization_error is not None else f"{'-':>12}"
            lines.append(f"{l.layer:>8} {l.kind:>14} {l.n_weights:>8} {l.p_hat:7.4f} {l.entropy_ratio:7.4f} "
                         f"{j} {l.bitwise_ops:>14}")
        return "\n".join(lines)


def weight_histogram(w, bins=HIST_BINS, sigmas=HIST_SIGMAS):
    w = np.asarray(w, dtype=DTYPE).ravel()
    sd = float(w.std())
    lim = sigmas * (sd if sd > 0 else 1.0)
    counts, edges = np.histogram(w, bins=bins, range=(-lim, lim))
    return edges.tolist(), counts.tolist()


def activation_fractions(model: Model, x, batch_size=500) -> dict:
    """+1 fraction of the binarized input of every binary layer over ``x``."""
    acts: dict = {}
    for start in range(0, len(x), batch_size):
        ctx = Context(training=False, activations=acts)
        model.forward(np.asarray(x[start : start + batch_size], dtype=DTYPE), ctx)
    return {k: plus / total for k, (plus, total) in acts.items()}


def inspect_model(model: Model, x=None, mode="ours", source="model") -> InspectionReport:
    ops = {r["layer"]: r for r in count_ops(model, mode)}
    acts = activation_fractions(model, x) if x is not None else {}
    report = InspectionReport(source)
    for layer in model.binary_layers():
        q = layer.quantized()
        signs = sign_binarize(q.pre)
        ent = bernoulli_entropy(signs)
        edges, counts = weight_histogram(layer.params["weight"])
        lr = LayerReport(layer.name, layer.kind, int(signs.size), ent.p_hat, ent.entropy_nats, ent.ratio,
                         quantization_error(q.pre, signs * q.scale), edges, counts,
                         ops[layer.name]["float_ops"], ops[layer.name]["bitwise_ops"])
        if layer.name in acts:
            a = entropy_from_fraction(acts[layer.name])
            lr.activation_p_hat, lr.activation_entropy_ratio = a.p_hat, a.ratio
        report.layers.append(lr)
    return report


def inspect_packed(model: PackedModel, mode="ours", source="packed") -> InspectionReport:
    """Report for a packed model; latent weights are gone, so no histogram or J."""
    shaped = Model(model.specs, model.input_shape, rng=None, require_fp_ends=False)
    ops = {r["layer"]: r for r in count_ops(shaped, mode)}
    report = InspectionReport(source)
    for layer in model.iter_layers():
        if layer.weights is None:
            continue
        ent = bernoulli_entropy(unpack(layer.weights))
        o = ops.get(layer.name, {"float_ops": 0, "bitwise_ops": 0})
        report.layers.append(LayerReport(layer.name, layer.kind, layer.weights.rows * layer.weights.logical_len,
                                         ent.p_hat, ent.entropy_nats, ent.ratio,
                                         float_ops=o["float_ops"], bitwise_ops=o["bitwise_ops"]))
    return report
