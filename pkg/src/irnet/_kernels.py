"""Compiled helpers for the memory-bound parts of convolution and pooling."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def im2row(x, k, stride, pad):
    n, c, h, w = x.shape
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (w + 2 * pad - k) // stride + 1
    rows = np.zeros((n * h_out * w_out, c * k * k), dtype=x.dtype)
    for b in range(n):
        for oy in range(h_out):
            for ox in range(w_out):
                r = (b * h_out + oy) * w_out + ox
                col = 0
                for ch in range(c):
                    for i in range(k):
                        y = oy * stride + i - pad
                        for j in range(k):
                            xx = ox * stride + j - pad
                            if 0 <= y < h and 0 <= xx < w:
                                rows[r, col] = x[b, ch, y, xx]
                            col += 1
    return rows


@nb.njit(cache=True)
def row2im(rows, n, c, h, w, k, stride, pad):
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c, h, w), dtype=rows.dtype)
    for b in range(n):
        for oy in range(h_out):
            for ox in range(w_out):
                r = (b * h_out + oy) * w_out + ox
                col = 0
                for ch in range(c):
                    for i in range(k):
                        y = oy * stride + i - pad
                        for j in range(k):
                            xx = ox * stride + j - pad
                            if 0 <= y < h and 0 <= xx < w:
                                out[b, ch, y, xx] += rows[r, col]
                            col += 1
    return out


@nb.njit(cache=True)
def maxpool_forward(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[b, ch, oy * k, ox * k]
                    best_i = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[b, ch, oy * k + i, ox * k + j]
                            if v > best:
                                best = v
                                best_i = i * k + j
                    out[b, ch, oy, ox] = best
                    arg[b, ch, oy, ox] = best_i
    return out, arg


@nb.njit(cache=True)
def maxpool_backward(grad, arg, k, h, w):
    n, c, ho, wo = grad.shape
    out = np.zeros((n, c, h, w), dtype=grad.dtype)
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    a = arg[b, ch, oy, ox]
                    out[b, ch, oy * k + a // k, ox * k + a % k] = grad[b, ch, oy, ox]
    return out
