"""Libra parameter binarization and its information diagnostics.

Latent weights are balanced (mean removed) and standardized (divided by their
population standard deviation), binarized by sign, and scaled by a power of
two ``2**s`` chosen from the mean absolute value of the standardized weights.
All per-channel operations treat axis 0 as the output channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, DimensionError, DomainError
from .tensor import DTYPE, as_tensor

LN2 = math.log(2.0)


@dataclass(frozen=True)
class StandardizedWeights:
    values: np.ndarray
    source_mean: float
    source_std: float


@dataclass(frozen=True)
class BinarizedWeights:
    """Sign tensor plus one integer shift per output channel.

    The represented weights are ``signs * 2**shift[c]`` for channel ``c``.
    """

    signs: np.ndarray
    shift: np.ndarray
    channel_count: int

    def reconstruct(self) -> np.ndarray:
        scale = np.ldexp(1.0, self.shift).reshape((-1,) + (1,) * (self.signs.ndim - 1))
        return self.signs * scale


@dataclass(frozen=True)
class EntropyReport:
    p_hat: float
    entropy_nats: float
    max_entropy_nats: float = LN2

    @property
    def ratio(self) -> float:
        return self.entropy_nats / self.max_entropy_nats


def standardize(w) -> StandardizedWeights:
    w = as_tensor(w)
    if w.size < 2:
        raise DimensionError(f"standardize needs at least 2 elements, got {w.size}")
    mu = float(np.mean(w))
    centered = w - mu
    sigma = float(np.std(centered))
    if sigma == 0.0:
        raise DegenerateWeightsError("constant weights have zero standard deviation")
    return StandardizedWeights(centered / sigma, mu, sigma)


def sign_binarize(x) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``."""
    x = as_tensor(x)
    return np.where(x >= 0, 1.0, -1.0)


binarize_activations = sign_binarize


def _values(w_std) -> np.ndarray:
    return w_std.values if isinstance(w_std, StandardizedWeights) else as_tensor(w_std)


def shift_scale(w_std) -> int:
    """Closed-form shift: ``round(log2(||w||_1 / n))`` with ties to even."""
    v = _values(w_std)
    l1 = float(np.sum(np.abs(v)))
    if l1 == 0.0:
        raise DegenerateWeightsError("zero L1 norm, shift undefined")
    # np.round rounds half to even
    return int(np.round(math.log2(l1 / v.size)))


def brute_force_shift(w_std, s_range=(-8, 8)) -> int:
    """Exhaustive search for the shift minimizing ``||w - sign(w) * 2**s||^2``.

    Ties go to the smaller ``|s|`` (then to the negative one).
    """
    v = _values(w_std)
    if float(np.sum(np.abs(v))) == 0.0:
        raise DegenerateWeightsError("zero L1 norm, shift undefined")
    b = sign_binarize(v)
    lo, hi = s_range
    best_s, best_err = None, math.inf
    for s in sorted(range(lo, hi + 1), key=lambda s: (abs(s), s)):
        err = float(np.sum((v - b * 2.0**s) ** 2))
        if err < best_err:
            best_s, best_err = s, err
    return best_s


def _channel_view(w: np.ndarray) -> np.ndarray:
    return w.reshape(1, -1) if w.ndim == 1 else w.reshape(w.shape[0], -1)


def standardize_channels(w: np.ndarray, layer=None):
    """Per-channel balance and standardization.

    Returns ``(w_std, mean, std)`` with ``mean``/``std`` of shape ``(channels,)``.
    """
    flat = _channel_view(as_tensor(w))
    if flat.shape[1] < 2:
        raise DimensionError(f"each channel needs at least 2 weights, got {flat.shape[1]}")
    mu = flat.mean(axis=1)
    centered = flat - mu[:, None]
    sigma = np.sqrt(np.mean(centered * centered, axis=1))
    bad = np.flatnonzero(sigma == 0.0)
    if bad.size:
        raise DegenerateWeightsError(
            "constant weights have zero standard deviation", channel=int(bad[0]), layer=layer
        )
    return (centered / sigma[:, None]).reshape(w.shape), mu, sigma


def channel_shifts(v: np.ndarray, layer=None) -> np.ndarray:
    """Per-channel closed-form shift of already balanced/standardized weights."""
    flat = _channel_view(v)
    mean_abs = np.mean(np.abs(flat), axis=1)
    bad = np.flatnonzero(mean_abs == 0.0)
    if bad.size:
        raise DegenerateWeightsError("zero L1 norm, shift undefined", channel=int(bad[0]), layer=layer)
    return np.round(np.log2(mean_abs)).astype(np.int64)


def libra_pb(w, layer=None) -> BinarizedWeights:
    """Binarize latent weights: per-channel standardize, sign, power-of-two shift."""
    w = as_tensor(w)
    w_std, _, _ = standardize_channels(w, layer=layer)
    shifts = channel_shifts(w_std, layer=layer)
    channels = 1 if w.ndim == 1 else w.shape[0]
    return BinarizedWeights(sign_binarize(w_std), shifts, channels)


def bernoulli_entropy(b) -> EntropyReport:
    """Entropy (nats) of the empirical +1/-1 distribution of ``b``."""
    b = np.asarray(b)
    if b.size == 0:
        raise DimensionError("entropy of an empty tensor")
    plus = b == 1
    if not np.all(plus | (b == -1)):
        raise DomainError("bernoulli_entropy expects entries in {-1, +1}")
    return entropy_from_fraction(float(np.count_nonzero(plus)) / b.size)


def entropy_from_fraction(p: float) -> EntropyReport:
    """Bernoulli entropy (nats) for a +1 probability ``p``, with 0 ln 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0, 1]")
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            h -= q * math.log(q)
    return EntropyReport(p_hat=p, entropy_nats=h)


def quantization_error(x, q) -> float:
    """Squared L2 distance between full-precision and quantized values."""
    x = as_tensor(x)
    q = as_tensor(q)
    if x.shape != q.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {q.shape}")
    d = x - q
    return float(np.sum(d * d, dtype=DTYPE))
