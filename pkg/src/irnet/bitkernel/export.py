"""Freezing a trained model into packed form and running inference on it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateWeightsError, DimensionError, IRNetError
from ..libra import sign_binarize
from ..nn import functional as F
from ..nn.layers import quantize_weight
from ..nn.model import LayerSpec, Model
from ..tensor import DTYPE, conv_output_size
from .gemm import apply_shifts, xnor_popcount_matrix
from .packing import PackedBitTensor, pack, pack_signs, unpack


@dataclass
class PackedLayer:
    kind: str
    name: str
    spec: LayerSpec
    arrays: dict = field(default_factory=dict)
    weights: PackedBitTensor | None = None
    shifts: np.ndarray | None = None
    children: list = field(default_factory=list)


@dataclass
class PackedModel:
    input_shape: tuple
    specs: list
    layers: list
    metadata: dict = field(default_factory=dict)

    def iter_layers(self):
        def walk(layers):
            for layer in layers:
                yield layer
                yield from walk(layer.children)

        return walk(self.layers)


def _cast(a, float_dtype):
    return np.asarray(a, dtype=float_dtype).astype(DTYPE)


def _export_layer(layer, spec, float_dtype):
    out = PackedLayer(layer.kind, layer.name, spec)
    if layer.kind.startswith("binary"):
        w = layer.params["weight"]
        try:
            q = quantize_weight(w, layer.quantizer, layer=layer.name)
        except DegenerateWeightsError as exc:
            raise IRNetError(f"cannot export layer {layer.name}: {exc}") from exc
        out.weights = pack_signs(q.pre.reshape(w.shape[0], -1))
        out.shifts = q.shifts.astype(np.int64)
    elif layer.kind == "batchnorm":
        out.arrays = {
            "gamma": _cast(layer.params["gamma"], float_dtype),
            "beta": _cast(layer.params["beta"], float_dtype),
            "running_mean": _cast(layer.running_mean, float_dtype),
            "running_var": _cast(layer.running_var, float_dtype),
            "eps": np.asarray(layer.eps, dtype=DTYPE),
        }
    elif layer.kind in ("fp_conv", "fp_linear"):
        out.arrays = {k: _cast(v, float_dtype) for k, v in layer.params.items()}
    if layer.kind == "residual":
        out.children = [_export_layer(c, s, float_dtype) for c, s in zip(layer.body, spec.body)]
    return out


def _effective_specs(model: Model):
    """Layer specs matching the layers actually built (binary kinds become fp in the FP arm)."""

    def fix(spec, layer):
        s = LayerSpec(**{**spec.to_dict(), "body": []})
        s.kind = layer.kind
        if layer.kind == "residual":
            s.body = [fix(cs, cl) for cs, cl in zip(spec.body, layer.body)]
        return s

    return [fix(s, l) for s, l in zip(model.specs, model.layers)]


def export_model(model, float_dtype=np.float64, metadata=None) -> PackedModel:
    """Freeze binary layers to packed sign bits plus per-channel shifts.

    ``float_dtype`` sets the precision kept for batchnorm and full-precision
    layers; use ``np.float32`` to match what a model file stores.
    """
    model = getattr(model, "model", model)
    specs = _effective_specs(model)
    layers = [_export_layer(l, s, float_dtype) for l, s in zip(model.layers, specs)]
    return PackedModel(model.input_shape, specs, layers, dict(metadata or {}))


# --------------------------------------------------------------------------
# inference


def _binary_conv(layer: PackedLayer, x, trace):
    spec = layer.spec
    n, c, h, w = x.shape
    k, s, p = spec.kernel, spec.stride, spec.pad
    h_out = conv_output_size(h, k, s, p)
    w_out = conv_output_size(w, k, s, p)
    if spec.binarize_input:
        rows = F.conv_rows(sign_binarize(x), k, s, p)
        acts = pack(rows, allow_zero=True) if p else pack_signs(rows)
        dots = xnor_popcount_matrix(layer.weights, acts)
        z = apply_shifts(dots, layer.shifts)
    else:
        dots = unpack(layer.weights) @ F.conv_rows(x, k, s, p).T
        z = dots * np.ldexp(1.0, layer.shifts)[:, None]
    if trace is not None:
        trace[layer.name] = dots.reshape(-1, n, h_out, w_out).transpose(1, 0, 2, 3)
    return z.reshape(-1, n, h_out, w_out).transpose(1, 0, 2, 3)


def _binary_linear(layer: PackedLayer, x, trace):
    if layer.spec.binarize_input:
        dots = xnor_popcount_matrix(layer.weights, pack_signs(x))
        z = apply_shifts(dots, layer.shifts)
    else:
        dots = unpack(layer.weights) @ x.T
        z = dots * np.ldexp(1.0, layer.shifts)[:, None]
    if trace is not None:
        trace[layer.name] = dots.T
    return z.T


def _run(layers, x, trace):
    for layer in layers:
        kind, spec, a = layer.kind, layer.spec, layer.arrays
        if kind == "binary_conv":
            x = _binary_conv(layer, x, trace)
        elif kind == "binary_linear":
            x = _binary_linear(layer, x, trace)
        elif kind == "fp_conv":
            x = F.conv2d(x, a["weight"], spec.stride, spec.pad)
        elif kind == "fp_linear":
            x = F.linear(x, a["weight"], a.get("bias"))
        elif kind == "batchnorm":
            x = F.batchnorm_eval(x, a["running_mean"], a["running_var"], a["gamma"], a["beta"],
                                 float(a["eps"]))
        elif kind == "hardtanh":
            x = F.hardtanh(x)
        elif kind == "maxpool":
            x = F.maxpool(x, spec.kernel or 2)
        elif kind == "avgpool":
            x = F.avgpool(x, spec.kernel)
        elif kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif kind == "residual":
            body = _run(layer.children, x, trace)
            x = body + F.residual_shortcut(x, spec.in_features, spec.out_features, spec.stride)
        else:
            raise IRNetError(f"unknown packed layer kind {kind!r}")
    return x


def packed_infer(model: PackedModel, x, batch_size=500, trace=None):
    """Logits for ``x`` computed with XNOR-popcount binary layers.

    When ``trace`` is a dict it receives, per binary layer, the integer dot
    products before scaling and batchnorm.
    """
    x = np.asarray(x, dtype=DTYPE)
    if tuple(x.shape[1:]) != tuple(model.input_shape):
        raise DimensionError(f"input shape {x.shape[1:]} does not match model {model.input_shape}")
    outs = []
    parts = {}
    for start in range(0, len(x), batch_size):
        local = {} if trace is not None else None
        outs.append(_run(model.layers, x[start : start + batch_size], local))
        if local is not None:
            for k, v in local.items():
                parts.setdefault(k, []).append(v)
    if trace is not None:
        trace.update({k: np.concatenate(v) for k, v in parts.items()})
    return np.concatenate(outs)


def model_size_report(model: PackedModel, float_bytes=4):
    """Storage of the packed model versus an all-float32 model with the same parameters."""
    binary_params = packed_bytes = shift_count = 0
    fp_params = 0
    for layer in model.iter_layers():
        if layer.weights is not None:
            binary_params += layer.weights.rows * layer.weights.logical_len
            packed_bytes += layer.weights.nbytes()
            shift_count += layer.shifts.size
        for name, arr in layer.arrays.items():
            if name != "eps":
                fp_params += arr.size
    fp_bytes = fp_params * float_bytes
    packed_total = packed_bytes + shift_count + fp_bytes
    float_total = (binary_params + fp_params) * float_bytes
    return {
        "binary_params": binary_params,
        "fp_params": fp_params,
        "packed_weight_bytes": packed_bytes,
        "shift_bytes": shift_count,
        "fp_bytes": fp_bytes,
        "packed_total_bytes": packed_total,
        "float_total_bytes": float_total,
        "binary_compression": (binary_params * float_bytes) / max(packed_bytes, 1),
        "overall_compression": float_total / max(packed_total, 1),
    }
