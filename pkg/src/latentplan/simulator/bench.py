"""Wall-clock latency benchmarking of planner inference."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np


@dataclass
class BenchConfig:
    warmup: int = 5
    repeats: int = 100


def bench_latency(planner_fn, conditions, config: BenchConfig | None = None,
                  nfe: int | None = None) -> dict:
    """Time planner_fn(cond) over >= repeats calls, excluding warmup.

    conditions are cycled. Returns mean/p50/p99 in milliseconds plus the
    caller-stated NFE per call.
    """
    cfg = config or BenchConfig()
    if not conditions:
        raise ValueError("need at least one condition")
    for i in range(cfg.warmup):
        planner_fn(conditions[i % len(conditions)])
    times = np.empty(cfg.repeats)
    for i in range(cfg.repeats):
        t0 = time.perf_counter()
        planner_fn(conditions[i % len(conditions)])
        times[i] = time.perf_counter() - t0
    ms = times * 1000.0
    return {
        "mean_ms": float(ms.mean()),
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
        "nfe": nfe if nfe is not None else -1,
        "calls": cfg.repeats,
    }
