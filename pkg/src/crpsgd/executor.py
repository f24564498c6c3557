"""Simulated N-worker data-parallel round.

Workers compute keyed batch gradient averages (optionally on threads); the
aggregation is a fixed pairwise tree over worker index, so the result never
depends on thread scheduling. Communication is counted, not transported.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .rng import KeyLog, debug_keys_enabled


@dataclass
class Counters:
    sfo_per_worker: int = 0
    comm_rounds: int = 0


class WorkerPool:
    """N simulated workers executed with ``parallelism`` threads.

    ``parallelism`` only changes how the work is scheduled; results are
    identical for every value.
    """

    def __init__(self, N: int, parallelism: int = 1, debug_keys: bool | None = None):
        if N < 1:
            raise ConfigurationError(f"need at least one worker, got N={N}")
        if parallelism < 1:
            raise ConfigurationError(f"parallelism must be >= 1, got {parallelism}")
        self.N = int(N)
        self.parallelism = min(int(parallelism), self.N)
        self._executor = ThreadPoolExecutor(self.parallelism) if self.parallelism > 1 else None
        if debug_keys is None:
            debug_keys = debug_keys_enabled()
        self.key_log = KeyLog() if debug_keys else None

    def map(self, fn, items):
        if self._executor is None:
            return [fn(i) for i in items]
        return list(self._executor.map(fn, items))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        ex = getattr(self, "_executor", None)
        if ex is not None:
            ex.shutdown(wait=False)


def parallel_batch_averages(oracle, x, B: int, pool: WorkerPool, rnd: int, run_id: int,
                            counters: Counters | None = None) -> list[np.ndarray]:
    """Per-worker means of B fresh samples at ``x`` keyed (run_id, i, rnd, 0..B-1)."""
    if B < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {B}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if pool.key_log is not None:
        for i in range(pool.N):
            pool.key_log.consume(run_id, i, rnd, 0, B)
    gs = pool.map(lambda i: oracle.batch_mean(x, run_id, i, rnd, B), range(pool.N))
    if counters is not None:
        counters.sfo_per_worker += B
    return gs


def tree_sum(vs):
    """Pairwise sum over a fixed split of the index range."""
    n = len(vs)
    if n == 1:
        return np.array(vs[0], dtype=np.float64, copy=True)
    mid = (n + 1) // 2
    return tree_sum(vs[:mid]) + tree_sum(vs[mid:])


def aggregate(gs, counters: Counters | None = None) -> np.ndarray:
    """Average of the per-worker vectors; one communication round.

    Computed as g_0 + tree_sum(g_i - g_0) / N so that identical inputs
    average to themselves exactly.
    """
    if len(gs) == 0:
        raise ConfigurationError("nothing to aggregate")
    shape = np.shape(gs[0])
    for g in gs:
        if np.shape(g) != shape:
            raise ConfigurationError(f"cannot aggregate vectors of shapes {shape} and {np.shape(g)}")
    ref = np.asarray(gs[0], dtype=np.float64)
    out = ref + tree_sum([np.asarray(g, dtype=np.float64) - ref for g in gs]) / len(gs)
    if counters is not None:
        counters.comm_rounds += 1
    return out


def sgd_step(x, g, gamma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != g.shape:
        raise ConfigurationError(f"iterate shape {x.shape} != gradient shape {g.shape}")
    if not gamma > 0:
        raise ConfigurationError(f"learning rate must be > 0, got {gamma}")
    return x - gamma * g
