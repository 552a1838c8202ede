"""Architecture descriptions, model assembly and per-layer op accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DomainError, IRNetError
from .layers import (
    AvgPool2d,
    BatchNorm,
    BinaryConv2d,
    BinaryLinear,
    Context,
    Conv2d,
    Flatten,
    Hardtanh,
    Linear,
    MaxPool2d,
    Residual,
)

LAYER_KINDS = (
    "binary_conv",
    "binary_linear",
    "fp_conv",
    "fp_linear",
    "batchnorm",
    "hardtanh",
    "maxpool",
    "avgpool",
    "flatten",
    "residual",
)
WEIGHT_KINDS = ("binary_conv", "binary_linear", "fp_conv", "fp_linear")


@dataclass
class LayerSpec:
    kind: str
    in_features: int | None = None
    out_features: int | None = None
    kernel: int | None = None
    stride: int = 1
    pad: int = 0
    binarize_input: bool = True
    body: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise IRNetError(f"unknown layer kind {self.kind!r}")
        self.body = [b if isinstance(b, LayerSpec) else LayerSpec(**b) for b in self.body]

    def to_dict(self):
        return asdict(self)


def _flat_weight_kinds(specs):
    for s in specs:
        if s.kind == "residual":
            yield from _flat_weight_kinds(s.body)
        elif s.kind in WEIGHT_KINDS:
            yield s.kind


def check_fp_ends(specs):
    """First and last weight-bearing layers must be full precision."""
    kinds = list(_flat_weight_kinds(specs))
    if not kinds:
        raise IRNetError("architecture has no weight layers")
    if kinds[0].startswith("binary") or kinds[-1].startswith("binary"):
        raise IRNetError("first and last weight layers must be full precision")


# --------------------------------------------------------------------------
# shipped architectures


def _bconv(cin, cout, k, stride=1, pad=0):
    return LayerSpec("binary_conv", cin, cout, k, stride, pad)


def _bn(c):
    return LayerSpec("batchnorm", c)


def _ht():
    return LayerSpec("hardtanh")


def mlp_specs(input_shape=(1, 28, 28), num_classes=10, hidden=256):
    n_in = int(np.prod(input_shape))
    return [
        LayerSpec("flatten"),
        LayerSpec("fp_linear", n_in, hidden),
        _bn(hidden), _ht(),
        LayerSpec("binary_linear", hidden, hidden),
        _bn(hidden), _ht(),
        LayerSpec("binary_linear", hidden, hidden),
        _bn(hidden), _ht(),
        LayerSpec("fp_linear", hidden, num_classes),
    ]


def lenet_specs(input_shape=(1, 28, 28), num_classes=10, width=16):
    c, h, w = input_shape
    side = ((h - 4) // 2 - 4) // 2
    feats = 2 * width * side * side
    return [
        LayerSpec("fp_conv", c, width, 5),
        LayerSpec("maxpool", kernel=2),
        _bn(width), _ht(),
        _bconv(width, 2 * width, 5),
        LayerSpec("maxpool", kernel=2),
        _bn(2 * width), _ht(),
        LayerSpec("flatten"),
        LayerSpec("binary_linear", feats, 8 * width),
        _bn(8 * width), _ht(),
        LayerSpec("fp_linear", 8 * width, num_classes),
    ]


def vgg_small_specs(input_shape=(3, 32, 32), num_classes=10):
    c, h, _ = input_shape
    side = h // 8
    return [
        LayerSpec("fp_conv", c, 128, 3, 1, 1), _bn(128), _ht(),
        _bconv(128, 128, 3, 1, 1), LayerSpec("maxpool", kernel=2), _bn(128), _ht(),
        _bconv(128, 256, 3, 1, 1), _bn(256), _ht(),
        _bconv(256, 256, 3, 1, 1), LayerSpec("maxpool", kernel=2), _bn(256), _ht(),
        _bconv(256, 512, 3, 1, 1), _bn(512), _ht(),
        _bconv(512, 512, 3, 1, 1), LayerSpec("maxpool", kernel=2), _bn(512), _ht(),
        LayerSpec("flatten"),
        LayerSpec("fp_linear", 512 * side * side, num_classes),
    ]


def resnet20_specs(input_shape=(3, 32, 32), num_classes=10):
    c = input_shape[0]
    specs = [LayerSpec("fp_conv", c, 16, 3, 1, 1), _bn(16), _ht()]
    cin = 16
    for stage, cout in enumerate((16, 32, 64)):
        for block in range(3):
            stride = 2 if (stage > 0 and block == 0) else 1
            body = [_bconv(cin, cout, 3, stride, 1), _bn(cout), _ht(), _bconv(cout, cout, 3, 1, 1), _bn(cout)]
            specs.append(LayerSpec("residual", cin, cout, stride=stride, body=body))
            specs.append(_ht())
            cin = cout
    specs += [LayerSpec("avgpool"), LayerSpec("flatten"), LayerSpec("fp_linear", 64, num_classes)]
    return specs


ARCHITECTURES = {
    "mlp": mlp_specs,
    "lenet": lenet_specs,
    "vgg_small": vgg_small_specs,
    "resnet20": resnet20_specs,
}


def architecture_specs(name, input_shape, num_classes):
    try:
        builder = ARCHITECTURES[name]
    except KeyError:
        raise IRNetError(f"unknown architecture {name!r}; choose from {sorted(ARCHITECTURES)}") from None
    return builder(tuple(input_shape), num_classes)


# --------------------------------------------------------------------------
# assembly


def build_layer(spec: LayerSpec, rng, quantizer="libra", full_jacobian=False, binary=True):
    k = spec.kind
    if k == "binary_conv" and not binary:
        return Conv2d(spec.in_features, spec.out_features, spec.kernel, spec.stride, spec.pad, rng)
    if k == "binary_linear" and not binary:
        return Linear(spec.in_features, spec.out_features, rng, bias=False)
    if k == "binary_conv":
        return BinaryConv2d(spec.in_features, spec.out_features, spec.kernel, spec.stride, spec.pad,
                            rng, quantizer, spec.binarize_input, full_jacobian)
    if k == "binary_linear":
        return BinaryLinear(spec.in_features, spec.out_features, rng, quantizer,
                            spec.binarize_input, full_jacobian)
    if k == "fp_conv":
        return Conv2d(spec.in_features, spec.out_features, spec.kernel, spec.stride, spec.pad, rng)
    if k == "fp_linear":
        return Linear(spec.in_features, spec.out_features, rng)
    if k == "batchnorm":
        return BatchNorm(spec.in_features)
    if k == "hardtanh":
        return Hardtanh()
    if k == "maxpool":
        return MaxPool2d(spec.kernel or 2)
    if k == "avgpool":
        return AvgPool2d(spec.kernel)
    if k == "flatten":
        return Flatten()
    if k == "residual":
        body = [build_layer(s, rng, quantizer, full_jacobian, binary) for s in spec.body]
        return Residual(body, spec.in_features, spec.out_features, spec.stride)
    raise IRNetError(f"unknown layer kind {k!r}")


class Model:
    """A sequential stack of layers with a shared forward context.

    Parameters
    ----------
    specs : list of LayerSpec
    input_shape : tuple
        Per-sample input shape, e.g. ``(1, 28, 28)``.
    rng : numpy Generator, optional
        Used for weight initialization. Without it weights start at zero.
    quantizer : str
        Weight quantizer for binary layers.
    binary : bool
        When False, binary layer kinds are built as full-precision layers.
    """

    def __init__(self, specs, input_shape, rng=None, quantizer="libra", full_jacobian=False,
                 binary=True, require_fp_ends=True):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        if require_fp_ends:
            check_fp_ends(self.specs)
        self.input_shape = tuple(input_shape)
        self.quantizer = quantizer
        self.full_jacobian = full_jacobian
        self.binary = binary
        self.soft = False
        self.layers = [build_layer(s, rng, quantizer, full_jacobian, binary) for s in self.specs]
        self._assign_names(self.layers, "")
        if self.layers and hasattr(self.layers[0], "needs_input_grad"):
            self.layers[0].needs_input_grad = False
        self.shapes = self._infer_shapes()

    def _assign_names(self, layers, prefix):
        for i, layer in enumerate(layers):
            layer.name = f"{prefix}{i}"
            if layer.children():
                self._assign_names(layer.children(), f"{layer.name}.")

    def _infer_shapes(self):
        shapes = {}

        def walk(layers, shape):
            for layer in layers:
                out = layer.output_shape(shape)
                shapes[layer.name] = (tuple(shape), tuple(out))
                if layer.children():
                    walk(layer.children(), shape)
                shape = out
            return shape

        self.output_dim = walk(self.layers, self.input_shape)
        return shapes

    def iter_layers(self):
        def walk(layers):
            for layer in layers:
                yield layer
                yield from walk(layer.children())

        return walk(self.layers)

    def binary_layers(self):
        return [l for l in self.iter_layers() if l.kind.startswith("binary")]

    def parameters(self):
        """``(layer, name, array)`` for every trainable parameter."""
        return [(l, k, v) for l in self.iter_layers() for k, v in l.params.items()]

    def zero_grad(self):
        for layer in self.iter_layers():
            layer.zero_grad()

    def forward(self, x, ctx: Context | None = None):
        ctx = ctx or Context(training=False)
        ctx.soft = ctx.soft or self.soft
        out = x
        for layer in self.layers:
            out = layer.forward(out, ctx)
        return out

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
            if grad is None:
                break
        return grad


def soft_forward_mode(model: Model, enabled: bool):
    """Swap sign for ``k*tanh(t*x)`` in the forward pass. For gradient checking only."""
    model.soft = bool(enabled)
    return model


# --------------------------------------------------------------------------
# op accounting


def conv_op_counts(c_out, h_out, w_out, c_in, kh, kw, binary=True, mode="ours"):
    c1 = w_out * h_out * c_out
    c2 = kw * kh * c_in
    if not binary:
        return {"float_ops": c1 * c2, "bitwise_ops": 0, "C1": c1, "C2": c2}
    if mode == "ours":
        return {"float_ops": 0, "bitwise_ops": c1 * c2 + c1, "C1": c1, "C2": c2}
    if mode in ("xnor", "lqnet"):
        return {"float_ops": c1, "bitwise_ops": c1 * c2, "C1": c1, "C2": c2}
    raise DomainError(f"unknown accounting mode {mode!r}")


def count_ops(model: Model, mode="ours"):
    """Per weight layer float and bitwise op counts.

    Binary layers use the power-of-two scaling accounting in ``mode="ours"``
    and the float-scalar accounting in ``mode="xnor"``; full-precision layers
    report their multiply-accumulate count as float ops.
    """
    rows = []
    for layer in model.iter_layers():
        if layer.kind not in WEIGHT_KINDS:
            continue
        if layer.name not in model.shapes:
            raise DomainError(f"unresolved shape for layer {layer.name}")
        in_shape, out_shape = model.shapes[layer.name]
        binary = layer.kind.startswith("binary")
        if layer.kind.endswith("conv"):
            c_out, h_out, w_out = out_shape
            counts = conv_op_counts(c_out, h_out, w_out, in_shape[0], layer.kernel, layer.kernel,
                                    binary, mode)
        else:
            counts = conv_op_counts(out_shape[0], 1, 1, in_shape[0], 1, 1, binary, mode)
        rows.append({"layer": layer.name, "kind": layer.kind, **counts})
    return rows
