"""Bit packing of {-1, +1} data into little-endian 64-bit words.

Bit ``i`` of word ``w`` in a row holds element ``64*w + i`` (LSB first);
a set bit means +1, a clear bit means -1. Bits past the logical length are
zero and are masked out by every kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, DomainError

WORD_BITS = 64


def words_for(n: int) -> int:
    return (n + WORD_BITS - 1) // WORD_BITS


def tail_mask(n: int) -> np.ndarray:
    """Per-word mask selecting the ``n`` logical bits of a row."""
    nw = words_for(n)
    mask = np.full(nw, np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    rem = n % WORD_BITS
    if rem:
        mask[-1] = np.uint64((1 << rem) - 1)
    return mask


@dataclass(frozen=True)
class PackedBitTensor:
    """Rows of packed sign bits.

    ``valid`` (same shape as ``words``) marks entries that exist; it is
    ``None`` when every logical entry is present. Absent entries stand for
    zeros, e.g. the padded border of a convolution input.
    """

    words: np.ndarray
    logical_len: int
    valid: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.words.shape[0]

    @property
    def word_count(self) -> int:
        return self.words.shape[1]

    def nbytes(self) -> int:
        return self.words.nbytes


def _bits_to_words(bits: np.ndarray) -> np.ndarray:
    rows, n = bits.shape
    nw = words_for(n)
    packed = np.packbits(bits, axis=1, bitorder="little")
    out = np.zeros((rows, nw * 8), dtype=np.uint8)
    out[:, : packed.shape[1]] = packed
    return out.view("<u8").astype(np.uint64, copy=False)


def pack(x, allow_zero: bool = False) -> PackedBitTensor:
    """Pack a 1-d vector or 2-d matrix (row-wise) of +-1 values.

    With ``allow_zero`` entries equal to 0 are accepted and recorded as
    absent in ``valid``.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"pack expects a vector or matrix, got shape {x.shape}")
    plus = x == 1
    minus = x == -1
    if allow_zero:
        present = plus | minus
        if not np.all(present | (x == 0)):
            raise DomainError("pack expects entries in {-1, 0, +1}")
        valid = None if present.all() else _bits_to_words(present)
    else:
        if not np.all(plus | minus):
            raise DomainError("pack expects entries in {-1, +1}")
        valid = None
    return PackedBitTensor(_bits_to_words(plus), x.shape[1], valid)


def pack_signs(x) -> PackedBitTensor:
    """Pack ``sign(x)`` (with sign(0) = +1) without materializing the +-1 array."""
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    return PackedBitTensor(_bits_to_words(x >= 0), x.shape[1])


def unpack(p: PackedBitTensor) -> np.ndarray:
    """Inverse of :func:`pack`; always returns a 2-d ``(rows, n)`` float array."""
    raw = np.ascontiguousarray(p.words.astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, : p.logical_len]
    out = np.where(bits == 1, 1.0, -1.0)
    if p.valid is not None:
        vraw = np.ascontiguousarray(p.valid.astype("<u8")).view(np.uint8)
        vbits = np.unpackbits(vraw, axis=1, bitorder="little")[:, : p.logical_len]
        out = out * vbits
    return out
