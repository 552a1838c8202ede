"""Dense float64 tensor helpers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order. This
module adds the handful of operations the training path needs with explicit
shape checking, plus a counter-based seeded generator.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

DTYPE = np.float64


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox (counter-based) generator. Same seed, same stream on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def rand_normal(rng: np.random.Generator, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    shape = tuple(int(d) for d in np.atleast_1d(shape))
    return mean + std * rng.standard_normal(shape, dtype=DTYPE)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b, dtype=DTYPE)


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _conv_geometry(h, w, kernel, stride, pad):
    kh, kw = kernel
    if stride < 1 or pad < 0:
        raise DimensionError(f"invalid stride={stride} / pad={pad}")
    h_out = conv_output_size(h, kh, stride, pad)
    w_out = conv_output_size(w, kw, stride, pad)
    if h_out <= 0 or w_out <= 0:
        raise DimensionError(
            f"non-positive output size {h_out}x{w_out} for input {h}x{w}, kernel {kh}x{kw}"
        )
    return kh, kw, h_out, w_out


def im2col(x: np.ndarray, kernel, stride: int = 1, pad: int = 0, pad_value: float = 0.0) -> np.ndarray:
    """Unroll receptive fields into columns.

    ``x`` is ``(c, h, w)`` or a batch ``(n, c, h, w)``. The result has rows
    ordered ``(c, kh, kw)`` and columns ordered by output position; a batch
    gives ``(n, c*kh*kw, h_out*w_out)``.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise DimensionError(f"im2col expects (c,h,w) or (n,c,h,w), got {x.shape}")
    n, c, h, w = x.shape
    kh, kw, h_out, w_out = _conv_geometry(h, w, kernel, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_value)
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :h_out, :w_out]
    # (n, c, h_out, w_out, kh, kw) -> (n, c, kh, kw, h_out, w_out)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, h_out * w_out)
    cols = np.ascontiguousarray(cols)
    return cols[0] if single else cols


def col2im(cols: np.ndarray, input_shape, kernel, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back onto a ``(n, c, h, w)`` image."""
    n, c, h, w = input_shape
    kh, kw, h_out, w_out = _conv_geometry(h, w, kernel, stride, pad)
    cols = cols.reshape(n, c, kh, kw, h_out, w_out)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    for i in range(kh):
        i_end = i + stride * h_out
        for j in range(kw):
            j_end = j + stride * w_out
            out[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Batched convolution (cross-correlation) via im2col + GEMM."""
    c_out, c_in, kh, kw = weight.shape
    if x.shape[1] != c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, weight expects {c_in}")
    cols = im2col(x, (kh, kw), stride, pad)
    h_out = conv_output_size(x.shape[2], kh, stride, pad)
    w_out = conv_output_size(x.shape[3], kw, stride, pad)
    out = np.matmul(weight.reshape(c_out, -1), cols)
    return out.reshape(x.shape[0], c_out, h_out, w_out)


def mean(x: np.ndarray) -> float:
    if x.size == 0:
        raise DimensionError("mean of an empty tensor")
    return float(np.mean(x, dtype=DTYPE))


def std_pop(x: np.ndarray) -> float:
    """Population standard deviation (divides by n)."""
    if x.size == 0:
        raise DimensionError("std of an empty tensor")
    return float(np.std(x, dtype=DTYPE))
