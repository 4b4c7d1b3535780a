"""Wall-clock benchmark harness.

Times full-model forwards on a fixed random input after a warmup phase and
reports median / p95 latency plus an environment fingerprint.  BLAS thread
count is pinned explicitly (single-threaded by default) so runs are
comparable; timings are the one part of this package that is inherently
machine-dependent.
"""

from __future__ import annotations

import os
import platform
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .backbone import SRModel, forward
from .tensor import DTYPES


def environment_fingerprint(threads: int) -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
        "blas_threads": threads,
    }


def bench(m: SRModel, h: int, w: int, warmup: int = 1, iters: int = 5,
          threads: int = 1, seed: int = 0,
          schedule: str | None = None) -> dict:
    """Median/p95 forward latency over ``iters`` timed runs after ``warmup``
    untimed ones, single inference thread unless asked otherwise."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random((1, m.config.in_channels, h, w), dtype=np.float64) \
        .astype(DTYPES[m.dtype])
    times_ms = []
    with threadpool_limits(limits=threads):
        for _ in range(warmup):
            forward(m, x, schedule=schedule)
        for _ in range(iters):
            t0 = time.perf_counter()
            forward(m, x, schedule=schedule)
            times_ms.append((time.perf_counter() - t0) * 1e3)
    return {
        "schema_version": 1,
        "form": m.form,
        "input_size": [h, w],
        "warmup": warmup,
        "iters": iters,
        "median_ms": float(np.median(times_ms)),
        "p95_ms": float(np.percentile(times_ms, 95)),
        "times_ms": [float(t) for t in times_ms],
        "env": environment_fingerprint(threads),
    }
