"""Error decay estimator: the epoch schedule and the surrogate gradients of sign.

The surrogate is ``g(x) = k * tanh(t * x)``. Over training ``t`` grows
geometrically from ``t_min`` to ``t_max`` and ``k = max(1/t, 1)``, so the
estimator starts close to the identity, turns into a clipped identity at
``t = 1`` and then sharpens towards the sign function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ESTIMATORS = ("ede", "ste_identity", "ste_clip")


@dataclass(frozen=True)
class EdeSchedule:
    total_epochs: int
    t_min: float = 0.1
    t_max: float = 10.0

    def __post_init__(self):
        if self.total_epochs < 1:
            raise DomainError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not (0 < self.t_min <= self.t_max):
            raise DomainError(f"need 0 < t_min <= t_max, got {self.t_min}, {self.t_max}")


@dataclass(frozen=True)
class EdeParams:
    t: float
    k: float
    epoch: int = 0


def schedule_at(sched: EdeSchedule, i: int) -> EdeParams:
    """Control variables for epoch ``i`` (``0 <= i <= N``)."""
    n = sched.total_epochs
    if not 0 <= i <= n:
        raise DomainError(f"epoch {i} outside [0, {n}]")
    if i == 0:
        t = sched.t_min
    elif i == n:
        t = sched.t_max
    else:
        t = sched.t_min * 10.0 ** ((i / n) * math.log10(sched.t_max / sched.t_min))
    return EdeParams(t=t, k=max(1.0 / t, 1.0), epoch=i)


def ede_g(x, p: EdeParams):
    return p.k * np.tanh(p.t * np.asarray(x, dtype=np.float64))


def ede_grad(x, p: EdeParams):
    th = np.tanh(p.t * np.asarray(x, dtype=np.float64))
    return p.k * p.t * (1.0 - th * th)


def ste_identity_grad(x, p: EdeParams | None = None):
    return np.ones_like(np.asarray(x, dtype=np.float64))


def ste_clip_grad(x, p: EdeParams | None = None):
    return (np.abs(np.asarray(x, dtype=np.float64)) <= 1.0).astype(np.float64)


_GRADS = {"ede": ede_grad, "ste_identity": ste_identity_grad, "ste_clip": ste_clip_grad}


def estimator_grad(name: str):
    """Look up a backward estimator ``f(x, params) -> d sign(x)/dx`` by name."""
    try:
        return _GRADS[name]
    except KeyError:
        raise DomainError(f"unknown estimator {name!r}; choose from {ESTIMATORS}") from None


def _integrate(f, lo, hi, breakpoints=(), points=20001):
    xs = np.unique(np.concatenate([np.linspace(lo, hi, points), [b for b in breakpoints if lo < b < hi]]))
    return float(np.trapezoid(f(xs), xs))


def stage_one_error(p: EdeParams, points=20001) -> float:
    """Area between the EDE derivative and the clipped-identity derivative over ``[-k, k]``."""
    clip = p.k

    def f(x):
        return np.abs(ede_grad(x, p) - ste_clip_grad(x))

    return _integrate(f, -clip, clip, breakpoints=(-1.0, 1.0), points=points)


def stage_two_error(p: EdeParams, bound=3.0, points=20001) -> float:
    """Area between ``g`` and ``sign`` over ``[-bound, bound]``."""

    def f(x):
        return np.abs(ede_g(x, p) - np.where(x >= 0, 1.0, -1.0))

    return _integrate(f, -bound, bound, breakpoints=(0.0,), points=points)
