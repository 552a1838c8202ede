"""XNOR-popcount dot products and GEMM over packed sign bits.

For +-1 vectors ``a`` and ``b`` of length ``n`` the dot product is
``2 * popcount(xnor(a, b)) - n``. When some entries are absent (zero) the
count of present entries replaces ``n``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from ..errors import DimensionError
from .packing import PackedBitTensor, tail_mask

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)

HAVE_HW_POPCOUNT = hasattr(np, "bitwise_count")


def popcount_portable(x):
    """SWAR popcount of uint64 words (elementwise)."""
    x = np.asarray(x, dtype=np.uint64)
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.int64)


def popcount_hw(x):
    """Popcount through numpy's ufunc, which lowers to the CPU instruction where available."""
    return np.bitwise_count(np.asarray(x, dtype=np.uint64)).astype(np.int64)


popcount = popcount_hw if HAVE_HW_POPCOUNT else popcount_portable


@nb.njit(cache=True, inline="always")
def _popc(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@nb.njit(cache=True)
def _gemm_full(w, a, mask, n):
    m, nw = w.shape
    cols = a.shape[0]
    out = np.empty((m, cols), dtype=np.int64)
    for i in range(m):
        for j in range(cols):
            acc = np.uint64(0)
            for k in range(nw):
                acc += _popc(~(w[i, k] ^ a[j, k]) & mask[k])
            out[i, j] = 2 * np.int64(acc) - n
    return out


@nb.njit(cache=True)
def _gemm_valid(w, a, valid, mask):
    m, nw = w.shape
    cols = a.shape[0]
    out = np.empty((m, cols), dtype=np.int64)
    for j in range(cols):
        present = np.uint64(0)
        for k in range(nw):
            present += _popc(valid[j, k] & mask[k])
        for i in range(m):
            acc = np.uint64(0)
            for k in range(nw):
                acc += _popc(~(w[i, k] ^ a[j, k]) & valid[j, k] & mask[k])
            out[i, j] = 2 * np.int64(acc) - np.int64(present)
    return out


def _check_pair(a: PackedBitTensor, b: PackedBitTensor):
    if a.logical_len != b.logical_len:
        raise DimensionError(f"logical lengths differ: {a.logical_len} vs {b.logical_len}")


def _combined_valid(a, b, mask):
    v = mask[None, :]
    if a.valid is not None:
        v = v & a.valid
    if b.valid is not None:
        v = v & b.valid
    return v


def xnor_popcount_dot(a: PackedBitTensor, b: PackedBitTensor, popcount_fn=None) -> int:
    """Exact integer dot product of two packed single-row vectors."""
    _check_pair(a, b)
    if a.rows != 1 or b.rows != 1:
        raise DimensionError("xnor_popcount_dot expects single-row operands")
    pc = popcount_fn or popcount
    mask = tail_mask(a.logical_len)
    v = _combined_valid(a, b, mask)[0]
    agree = int(pc(~(a.words[0] ^ b.words[0]) & v).sum())
    present = a.logical_len if (a.valid is None and b.valid is None) else int(pc(v).sum())
    return 2 * agree - present


def xnor_popcount_matrix(w: PackedBitTensor, a: PackedBitTensor, backend="numba") -> np.ndarray:
    """Integer dots of every row of ``w`` with every row of ``a``: shape ``(w.rows, a.rows)``.

    ``a`` holds activation columns as rows (the im2col transpose).
    """
    _check_pair(w, a)
    if w.valid is not None:
        raise DimensionError("weight operand must not contain absent entries")
    mask = tail_mask(w.logical_len)
    if backend == "numba":
        if a.valid is None:
            return _gemm_full(w.words, a.words, mask, w.logical_len)
        return _gemm_valid(w.words, a.words, a.valid, mask)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    pc = popcount_hw if HAVE_HW_POPCOUNT else popcount_portable
    out = np.empty((w.rows, a.rows), dtype=np.int64)
    step = max(1, (1 << 22) // max(1, w.rows * w.word_count))
    for start in range(0, a.rows, step):
        aw = a.words[start : start + step]
        v = mask[None, :] if a.valid is None else a.valid[start : start + step] & mask
        agree = pc(~(w.words[:, None, :] ^ aw[None, :, :]) & v[None]).sum(axis=-1)
        present = pc(v).sum(axis=-1) if a.valid is not None else w.logical_len
        out[:, start : start + step] = 2 * agree - present
    return out


def apply_shifts(dots: np.ndarray, shifts) -> np.ndarray:
    """Scale row ``i`` of integer ``dots`` by ``2**shifts[i]``.

    Non-negative shifts use an integer left shift; negative ones an exact
    power-of-two float multiply.
    """
    shifts = np.asarray(shifts, dtype=np.int64)
    if shifts.shape != (dots.shape[0],):
        raise DimensionError(f"need one shift per row: {shifts.shape} vs {dots.shape[0]} rows")
    out = np.empty(dots.shape, dtype=np.float64)
    up = shifts >= 0
    if up.any():
        out[up] = np.left_shift(dots[up], shifts[up, None]).astype(np.float64)
    if (~up).any():
        out[~up] = np.ldexp(dots[~up].astype(np.float64), shifts[~up, None])
    return out


def packed_gemm(w: PackedBitTensor, a: PackedBitTensor, shifts=None, backend="numba") -> np.ndarray:
    """``(B_w . B_a) * 2**s`` for every weight row and activation column.

    ``shifts=None`` skips scaling and returns the raw integer dots as floats.
    """
    dots = xnor_popcount_matrix(w, a, backend)
    if shifts is None:
        return dots.astype(np.float64)
    return apply_shifts(dots, shifts)
