"""Layers with explicit forward/backward passes over float64 numpy arrays.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` during ``backward``.
Binary layers emulate the bitwise product in floating point: the sign
tensors are exact ``+-1`` values, so ``z`` holds exact integers times ``2**s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ede import EdeParams, ede_g, ede_grad, estimator_grad
from ..errors import DegenerateWeightsError, DimensionError, IRNetError
from ..libra import channel_shifts, sign_binarize, standardize_channels
from .. import _kernels
from . import functional as F
from ..tensor import DTYPE, conv_output_size, rand_normal

QUANTIZERS = ("libra", "libra_no_std", "libra_no_shift", "sign")


@dataclass
class Context:
    """Per-pass settings shared by all layers."""

    training: bool = True
    params: EdeParams = field(default_factory=lambda: EdeParams(t=1.0, k=1.0))
    estimator: str = "ede"
    soft: bool = False
    trace: dict | None = None
    activations: dict | None = None  # layer name -> [count of +1, count] of binarized inputs


class Layer:
    kind = "layer"
    name = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, ctx: Context):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, in_shape):
        """Per-sample output shape for a per-sample input shape."""
        return tuple(in_shape)

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def children(self):
        return []


def _kaiming(rng, shape, fan_in):
    return rand_normal(rng, shape, 0.0, np.sqrt(2.0 / fan_in))


# --------------------------------------------------------------------------
# weight quantization


@dataclass
class QuantizedWeight:
    pre: np.ndarray  # value fed to sign (and to the estimator in backward)
    scale: np.ndarray  # 2**s broadcastable against the weight
    shifts: np.ndarray
    sigma: np.ndarray | None  # per-channel std when standardized


def quantize_weight(w: np.ndarray, quantizer: str, layer=None) -> QuantizedWeight:
    c = w.shape[0]
    bshape = (c,) + (1,) * (w.ndim - 1)
    sigma = None
    if quantizer == "sign":
        pre = w
        shifts = np.zeros(c, dtype=np.int64)
    elif quantizer == "libra_no_std":
        flat = w.reshape(c, -1)
        pre = (flat - flat.mean(axis=1, keepdims=True)).reshape(w.shape)
        shifts = channel_shifts(pre, layer=layer)
    elif quantizer in ("libra", "libra_no_shift"):
        pre, _, sigma = standardize_channels(w, layer=layer)
        if quantizer == "libra":
            shifts = channel_shifts(pre, layer=layer)
        else:
            shifts = np.zeros(c, dtype=np.int64)
    else:
        raise IRNetError(f"unknown quantizer {quantizer!r}")
    scale = np.ldexp(1.0, shifts).reshape(bshape)
    return QuantizedWeight(pre, scale, shifts, sigma)


def standardization_backward(grad_pre, pre, sigma, quantizer):
    """Chain rule through per-channel centering (and scaling when ``sigma`` is given)."""
    c = grad_pre.shape[0]
    g = grad_pre.reshape(c, -1)
    if quantizer == "sign":
        return grad_pre
    g_c = g - g.mean(axis=1, keepdims=True)
    if quantizer == "libra_no_std":
        return g_c.reshape(grad_pre.shape)
    y = pre.reshape(c, -1)
    out = (g_c - y * np.mean(g * y, axis=1, keepdims=True)) / sigma[:, None]
    return out.reshape(grad_pre.shape)


class _BinaryBase(Layer):
    """Shared weight/activation binarization for binary conv and linear layers."""

    def __init__(self, quantizer="libra", binarize_input=True, full_jacobian=False):
        super().__init__()
        if quantizer not in QUANTIZERS:
            raise IRNetError(f"unknown quantizer {quantizer!r}")
        self.quantizer = quantizer
        self.binarize_input = binarize_input
        self.full_jacobian = full_jacobian

    def quantized(self):
        try:
            return quantize_weight(self.params["weight"], self.quantizer, layer=self.name)
        except DegenerateWeightsError as exc:
            if exc.layer is None:
                exc.layer = self.name
            raise

    def _binarize(self, x, ctx):
        return ede_g(x, ctx.params) if ctx.soft else sign_binarize(x)

    def _estimator(self, ctx):
        return ede_grad if ctx.soft else estimator_grad(ctx.estimator)

    def _prepare(self, x, ctx):
        q = self.quantized()
        qw = self._binarize(q.pre, ctx) * q.scale
        qa = self._binarize(x, ctx) if self.binarize_input else x
        if ctx.activations is not None and self.binarize_input:
            counts = ctx.activations.setdefault(self.name, [0, 0])
            counts[0] += int(np.count_nonzero(x >= 0))
            counts[1] += x.size
        self._cache = (x, q, ctx.params, self._estimator(ctx))
        return qw, qa, q

    def _weight_grad(self, grad_qw):
        x, q, params, est = self._cache
        grad_pre = grad_qw * est(q.pre, params) * q.scale
        if self.full_jacobian:
            return standardization_backward(grad_pre, q.pre, q.sigma, self.quantizer)
        return grad_pre

    def _input_grad(self, grad_qa):
        x, q, params, est = self._cache
        if self.binarize_input:
            return grad_qa * est(x, params)
        return grad_qa

    def _record(self, ctx, z, q):
        if ctx.trace is not None:
            c = q.shifts.size
            scale = np.ldexp(1.0, q.shifts).reshape((1, c) + (1,) * (z.ndim - 2))
            ctx.trace[self.name] = z / scale


# --------------------------------------------------------------------------
# convolution


class _ConvGeometry:
    needs_input_grad = True

    def _setup_conv(self, in_channels, out_channels, kernel, stride, pad):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise DimensionError(f"{self.name}: expected {self.in_channels} channels, got {c}")
        return (
            self.out_channels,
            conv_output_size(h, self.kernel, self.stride, self.pad),
            conv_output_size(w, self.kernel, self.stride, self.pad),
        )

    def _conv_forward(self, x, w):
        n, _, h, wd = x.shape
        k, s = self.kernel, self.stride
        h_out = conv_output_size(h, k, s, self.pad)
        w_out = conv_output_size(wd, k, s, self.pad)
        rows = F.conv_rows(x, k, s, self.pad)
        w2 = w.reshape(self.out_channels, -1)
        self._conv_cache = (x.shape, rows, w2, h_out, w_out)
        return F.conv_from_rows(rows, w2, n, h_out, w_out)

    def _conv_backward(self, grad):
        xshape, rows, w2, h_out, w_out = self._conv_cache
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        grad_w = (g2.T @ rows).reshape((self.out_channels, self.in_channels, self.kernel, self.kernel))
        if not self.needs_input_grad:
            return grad_w, None
        grad_rows = g2 @ w2
        return grad_w, _kernels.row2im(grad_rows, *xshape, self.kernel, self.stride, self.pad)


class Conv2d(_ConvGeometry, Layer):
    """Full-precision convolution without bias (a batchnorm always follows)."""

    kind = "fp_conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, rng=None):
        Layer.__init__(self)
        self._setup_conv(in_channels, out_channels, kernel, stride, pad)
        shape = (out_channels, in_channels, kernel, kernel)
        fan_in = in_channels * kernel * kernel
        self.params["weight"] = (
            _kaiming(rng, shape, fan_in) if rng is not None else np.zeros(shape, DTYPE)
        )

    def forward(self, x, ctx):
        return self._conv_forward(x, self.params["weight"])

    def backward(self, grad):
        grad_w, grad_x = self._conv_backward(grad)
        self.grads["weight"] = self.grads.get("weight", 0) + grad_w
        return grad_x


class BinaryConv2d(_ConvGeometry, _BinaryBase):
    kind = "binary_conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, pad=0, rng=None,
                 quantizer="libra", binarize_input=True, full_jacobian=False):
        _BinaryBase.__init__(self, quantizer, binarize_input, full_jacobian)
        self._setup_conv(in_channels, out_channels, kernel, stride, pad)
        shape = (out_channels, in_channels, kernel, kernel)
        fan_in = in_channels * kernel * kernel
        self.params["weight"] = (
            _kaiming(rng, shape, fan_in) if rng is not None else np.zeros(shape, DTYPE)
        )

    def forward(self, x, ctx):
        qw, qa, q = self._prepare(x, ctx)
        z = self._conv_forward(qa, qw)
        self._record(ctx, z, q)
        return z

    def backward(self, grad):
        grad_qw, grad_qa = self._conv_backward(grad)
        self.grads["weight"] = self.grads.get("weight", 0) + self._weight_grad(grad_qw)
        return None if grad_qa is None else self._input_grad(grad_qa)


# --------------------------------------------------------------------------
# fully connected


class Linear(Layer):
    kind = "fp_linear"

    def __init__(self, in_features, out_features, rng=None, bias=True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        shape = (out_features, in_features)
        self.params["weight"] = (
            _kaiming(rng, shape, in_features) if rng is not None else np.zeros(shape, DTYPE)
        )
        if bias:
            self.params["bias"] = np.zeros(out_features, DTYPE)

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise DimensionError(f"{self.name}: expected ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x, ctx):
        self._x = x
        return F.linear(x, self.params["weight"], self.params.get("bias"))

    def backward(self, grad):
        self.grads["weight"] = self.grads.get("weight", 0) + grad.T @ self._x
        if "bias" in self.params:
            self.grads["bias"] = self.grads.get("bias", 0) + grad.sum(axis=0)
        return grad @ self.params["weight"]


class BinaryLinear(_BinaryBase):
    kind = "binary_linear"

    def __init__(self, in_features, out_features, rng=None, quantizer="libra",
                 binarize_input=True, full_jacobian=False):
        super().__init__(quantizer, binarize_input, full_jacobian)
        self.in_features = in_features
        self.out_features = out_features
        shape = (out_features, in_features)
        self.params["weight"] = (
            _kaiming(rng, shape, in_features) if rng is not None else np.zeros(shape, DTYPE)
        )

    output_shape = Linear.output_shape

    def forward(self, x, ctx):
        qw, qa, q = self._prepare(x, ctx)
        self._qa, self._qw = qa, qw
        z = qa @ qw.T
        self._record(ctx, z, q)
        return z

    def backward(self, grad):
        grad_qw = grad.T @ self._qa
        grad_qa = grad @ self._qw
        self.grads["weight"] = self.grads.get("weight", 0) + self._weight_grad(grad_qw)
        return self._input_grad(grad_qa)


# --------------------------------------------------------------------------
# normalization, activation, pooling


class BatchNorm(Layer):
    """Batch normalization over the channel axis (axis 1) of 2-d or 4-d input."""

    kind = "batchnorm"

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        super().__init__()
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(num_features, DTYPE)
        self.params["beta"] = np.zeros(num_features, DTYPE)
        self.running_mean = np.zeros(num_features, DTYPE)
        self.running_var = np.ones(num_features, DTYPE)

    def output_shape(self, in_shape):
        if in_shape[0] != self.num_features:
            raise DimensionError(f"{self.name}: expected {self.num_features} channels, got {in_shape}")
        return tuple(in_shape)

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _bshape(self, x):
        return (1, -1) if x.ndim == 2 else (1, -1, 1, 1)

    def forward(self, x, ctx):
        axes, bs = self._axes(x), self._bshape(x)
        gamma = self.params["gamma"].reshape(bs)
        beta = self.params["beta"].reshape(bs)
        if not ctx.training:
            return F.batchnorm_eval(x, self.running_mean, self.running_var, self.params["gamma"],
                                    self.params["beta"], self.eps)
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = x.size // self.num_features
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
        unbiased = var * m / max(m - 1, 1)
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu.reshape(bs)) * inv.reshape(bs)
        self._cache = (xhat, inv, axes, bs)
        return xhat * gamma + beta

    def backward(self, grad):
        xhat, inv, axes, bs = self._cache
        self.grads["gamma"] = self.grads.get("gamma", 0) + (grad * xhat).sum(axis=axes)
        self.grads["beta"] = self.grads.get("beta", 0) + grad.sum(axis=axes)
        gx = grad * self.params["gamma"].reshape(bs)
        mean_g = gx.mean(axis=axes, keepdims=True)
        mean_gx = (gx * xhat).mean(axis=axes, keepdims=True)
        return (gx - mean_g - xhat * mean_gx) * inv.reshape(bs)


class Hardtanh(Layer):
    kind = "hardtanh"

    def forward(self, x, ctx):
        self._mask = (x >= -1.0) & (x <= 1.0)
        return F.hardtanh(x)

    def backward(self, grad):
        return grad * self._mask


class MaxPool2d(Layer):
    """Non-overlapping max pooling (kernel == stride)."""

    kind = "maxpool"

    def __init__(self, kernel=2):
        super().__init__()
        self.kernel = kernel

    def output_shape(self, in_shape):
        c, h, w = in_shape
        k = self.kernel
        if h % k or w % k:
            raise DimensionError(f"{self.name}: {h}x{w} not divisible by pool {k}")
        return (c, h // k, w // k)

    def forward(self, x, ctx):
        out, arg = _kernels.maxpool_forward(np.ascontiguousarray(x), self.kernel)
        self._cache = (x.shape, arg)
        return out

    def backward(self, grad):
        (n, c, h, w), arg = self._cache
        return _kernels.maxpool_backward(np.ascontiguousarray(grad), arg, self.kernel, h, w)


class AvgPool2d(Layer):
    """Non-overlapping average pooling; ``kernel=None`` pools the whole map."""

    kind = "avgpool"

    def __init__(self, kernel=None):
        super().__init__()
        self.kernel = kernel

    def _k(self, h):
        return h if self.kernel is None else self.kernel

    def output_shape(self, in_shape):
        c, h, w = in_shape
        kh = self._k(h)
        kw = self._k(w) if self.kernel is None else self.kernel
        if h % kh or w % kw:
            raise DimensionError(f"{self.name}: {h}x{w} not divisible by pool {kh}x{kw}")
        return (c, h // kh, w // kw)

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        kh = self._k(h)
        kw = w if self.kernel is None else self.kernel
        self._cache = (x.shape, kh, kw)
        return F.avgpool(x, self.kernel)

    def backward(self, grad):
        (n, c, h, w), kh, kw = self._cache
        g = np.repeat(np.repeat(grad, kh, axis=2), kw, axis=3)
        return g / (kh * kw)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, ctx):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Residual(Layer):
    """``body(x) + shortcut(x)``. The shortcut subsamples spatially and zero-pads channels."""

    kind = "residual"

    def __init__(self, body, in_channels, out_channels, stride=1):
        super().__init__()
        self.body = list(body)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride

    def children(self):
        return self.body

    def output_shape(self, in_shape):
        shape = tuple(in_shape)
        for layer in self.body:
            shape = layer.output_shape(shape)
        return shape

    def shortcut(self, x):
        return F.residual_shortcut(x, self.in_channels, self.out_channels, self.stride)

    def forward(self, x, ctx):
        self._xshape = x.shape
        out = x
        for layer in self.body:
            out = layer.forward(out, ctx)
        return out + self.shortcut(x)

    def backward(self, grad):
        g = grad
        for layer in reversed(self.body):
            g = layer.backward(g)
        extra = self.out_channels - self.in_channels
        gs = grad
        if extra:
            lo = extra // 2
            gs = gs[:, lo : lo + self.in_channels]
        if self.stride > 1:
            full = np.zeros(self._xshape, DTYPE)
            full[:, :, :: self.stride, :: self.stride] = gs
            gs = full
        return g + gs
