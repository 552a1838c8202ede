"""Micro-benchmark: packed XNOR-popcount GEMM against a naive float GEMM.

Both kernels are compiled by numba into the same process and run single
threaded. Each case is an ``(m, k, n)`` product: ``m`` weight rows, inner
length ``k`` and ``n`` activation columns.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np
from threadpoolctl import threadpool_limits

from .bitkernel.gemm import apply_shifts, xnor_popcount_matrix
from .bitkernel.packing import pack_signs

SUITES = {
    "small": [(8, 8, 8), (16, 64, 16), (64, 64, 64)],
    "gemm": [(128, 128, 128), (256, 256, 256), (512, 512, 512)],
    # conv layers lowered by im2col: (c_out, c_in*k*k, h_out*w_out)
    "conv": [(16, 144, 1024), (32, 288, 256), (64, 576, 64), (128, 1152, 1024)],
}


@nb.njit(cache=True)
def naive_float_gemm(a, b):
    """Textbook triple loop, ``a @ b`` with ``a`` of shape (m, k) and ``b`` of shape (k, n)."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = a.dtype.type(0)
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


@dataclass
class Timing:
    median: float
    min: float
    max: float


@dataclass
class BenchRow:
    m: int
    k: int
    n: int
    float_naive: Timing
    packed: Timing
    packed_with_packing: Timing
    speedup: float
    exact: bool


def _time(fn, reps):
    fn()  # warm-up (and JIT)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return Timing(statistics.median(samples), min(samples), max(samples))


def bench_case(m, k, n, reps=20, shifts=True, seed=0) -> BenchRow:
    rng = np.random.default_rng(seed)
    w = np.where(rng.random((m, k)) < 0.5, -1.0, 1.0).astype(np.float32)
    a = np.where(rng.random((k, n)) < 0.5, -1.0, 1.0).astype(np.float32)
    s = rng.integers(-2, 3, size=m)
    pw = pack_signs(w)
    pa = pack_signs(np.ascontiguousarray(a.T))

    def packed():
        d = xnor_popcount_matrix(pw, pa)
        return apply_shifts(d, s) if shifts else d

    def packed_full():
        d = xnor_popcount_matrix(pw, pack_signs(np.ascontiguousarray(a.T)))
        return apply_shifts(d, s) if shifts else d

    with threadpool_limits(1):
        tf = _time(lambda: naive_float_gemm(w, a), reps)
        tp = _time(packed, reps)
        tpp = _time(packed_full, reps)
    ref = naive_float_gemm(w.astype(np.float64), a.astype(np.float64))
    got = packed()
    if shifts:
        ref = ref * np.ldexp(1.0, s)[:, None]
    exact = bool(np.array_equal(ref, got))
    return BenchRow(m, k, n, tf, tp, tpp, tf.median / tp.median, exact)


def run_suite(suite="gemm", reps=20, shifts=True, cases=None):
    if cases is None:
        if suite not in SUITES:
            raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
        cases = SUITES[suite]
    return [bench_case(m, k, n, reps, shifts) for m, k, n in cases]


def format_table(rows) -> str:
    head = f"{'m':>5} {'k':>5} {'n':>5} | {'float ms (min-max)':>24} | {'packed ms (min-max)':>24} | " \
           f"{'+pack ms':>9} | {'speedup':>7} | exact"
    lines = [head, "-" * len(head)]
    for r in rows:
        f, p = r.float_naive, r.packed
        lines.append(
            f"{r.m:>5} {r.k:>5} {r.n:>5} | {f.median*1e3:8.3f} ({f.min*1e3:.3f}-{f.max*1e3:.3f}) | "
            f"{p.median*1e3:8.3f} ({p.min*1e3:.3f}-{p.max*1e3:.3f}) | {r.packed_with_packing.median*1e3:9.3f} | "
            f"{r.speedup:7.1f} | {r.exact}"
        )
    return "\n".join(lines)


def rows_to_dicts(rows):
    return [asdict(r) for r in rows]
