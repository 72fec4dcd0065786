"""Timing harness for the inside kernels.

Measures median wall time per (path, backend, m, d, l) and fits the
log-log least-squares exponent of time against the symbol number m at
fixed sentence length.  The factored path with d = m should come out at
most quadratic in m; the dense path is cubic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grammar import random_td_pcfg, reconstruct_tensor


@dataclass(frozen=True)
class BenchRow:
    path: str        # "dense" | "factored"
    backend: str     # kernel backend name
    m: int
    d: int
    length: int
    median_seconds: float
    repetitions: int


def _grammar_for(m: int, d: int, seed: int = 0):
    n = max(1, m // 2)
    p = m - n
    q = 64
    return random_td_pcfg(n=n, p=p, q=q, d=d, seed=seed)


def _sentence(length: int, q: int = 64, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, q, size=length).astype(np.int64)


def time_inside(path: str, backend: str, m: int, d: int, length: int,
                repetitions: int = 3) -> BenchRow:
    g = _grammar_for(m, d)
    ids = _sentence(length, g.q)
    kern = kernels.get_backend(backend)
    if path == "dense":
        dense = reconstruct_tensor(g)
        args = (dense.T, dense.Q, dense.r, ids)
        fn = kern.inside_dense
    elif path == "factored":
        args = (g.U, g.V, g.W, g.Q, g.r, ids)
        fn = kern.inside_factored
    else:
        raise ValueError(f"unknown path {path!r}")
    for _ in range(2):  # warm up (allocations, caches, code paths)
        fn(*args)
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return BenchRow(path=path, backend=backend, m=m, d=d, length=length,
                    median_seconds=float(np.median(times)), repetitions=repetitions)


def fit_exponent(ms, seconds) -> float:
    """Least-squares slope of log(time) against log(m)."""
    x = np.log(np.asarray(ms, dtype=float))
    y = np.log(np.asarray(seconds, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# smallest dense size is 24: below that a chart pass runs well under a
# millisecond and timer jitter plus per-split constants swamp the m^3 term
DENSE_M = (24, 32, 48, 64)
FACTORED_M = (64, 128, 256, 512)


def run_benchmark(backends=None, dense_m=DENSE_M, factored_m=FACTORED_M,
                  length: int = 20, repetitions: int = 3):
    """Full sweep; returns (rows, exponents) where exponents maps
    (path, backend) -> fitted slope."""
    if backends is None:
        backends = kernels.available_backends()
    rows: list[BenchRow] = []
    exponents: dict[tuple[str, str], float] = {}
    for backend in backends:
        for path, m_list in (("dense", dense_m), ("factored", factored_m)):
            series = []
            for m in m_list:
                d = m if path == "factored" else max(1, m // 2)
                row = time_inside(path, backend, m, d, length, repetitions)
                rows.append(row)
                series.append(row)
            exponents[(path, backend)] = fit_exponent(
                [r.m for r in series], [r.median_seconds for r in series]
            )
    return rows, exponents
