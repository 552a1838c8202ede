"""Forward primitives shared by the training layers and the packed inference path.

Both paths must produce bit-identical floats for the full-precision parts of
a network, so they call the same functions in the same order.
"""

import numpy as np

from .. import _kernels
from ..tensor import conv_output_size


def conv_rows(x, kernel, stride, pad):
    return _kernels.im2row(np.ascontiguousarray(x), kernel, stride, pad)


def conv_from_rows(rows, w2, n, h_out, w_out):
    """``rows @ w2.T`` reshaped back to ``(n, c_out, h_out, w_out)``."""
    out = rows @ w2.T
    return out.reshape(n, h_out, w_out, w2.shape[0]).transpose(0, 3, 1, 2)


def conv2d(x, w, stride=1, pad=0):
    n, _, h, wd = x.shape
    k = w.shape[2]
    rows = conv_rows(x, k, stride, pad)
    h_out = conv_output_size(h, k, stride, pad)
    w_out = conv_output_size(wd, k, stride, pad)
    return conv_from_rows(rows, w.reshape(w.shape[0], -1), n, h_out, w_out)


def linear(x, w, b=None):
    out = x @ w.T
    if b is not None:
        out = out + b
    return out


def batchnorm_eval(x, running_mean, running_var, gamma, beta, eps):
    bs = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    inv = 1.0 / np.sqrt(running_var + eps)
    return (x - running_mean.reshape(bs)) * inv.reshape(bs) * gamma.reshape(bs) + beta.reshape(bs)


def hardtanh(x):
    return np.clip(x, -1.0, 1.0)


def maxpool(x, kernel):
    return _kernels.maxpool_forward(np.ascontiguousarray(x), kernel)[0]


def avgpool(x, kernel=None):
    n, c, h, w = x.shape
    kh = h if kernel is None else kernel
    kw = w if kernel is None else kernel
    return x.reshape(n, c, h // kh, kh, w // kw, kw).mean(axis=(3, 5))


def residual_shortcut(x, in_channels, out_channels, stride):
    if stride > 1:
        x = x[:, :, ::stride, ::stride]
    extra = out_channels - in_channels
    if extra:
        lo = extra // 2
        x = np.pad(x, ((0, 0), (lo, extra - lo), (0, 0), (0, 0)))
    return x
