"""Counter-based random streams keyed by (run_id, worker, round, sample).

Every stochastic gradient draw is a pure function of its key, so results do
not depend on thread scheduling or on how many draws happened elsewhere.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

from .errors import StreamReuseError


@dataclass(frozen=True)
class RngStream:
    run_id: int
    worker: int
    round: int
    sample: int = 0

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.run_id, self.worker, self.round, self.sample)


def debug_keys_enabled() -> bool:
    return os.environ.get("CRPSGD_DEBUG_KEYS", "") not in ("", "0")


class KeyLog:
    """Records consumed key ranges and raises on reuse.

    A batch draw for (run, worker, round) consumes samples ``[start, stop)``.
    """

    def __init__(self):
        self._seen: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
        self._lock = threading.Lock()

    def consume(self, run_id: int, worker: int, rnd: int, start: int, stop: int) -> None:
        prefix = (run_id, worker, rnd)
        with self._lock:
            spans = self._seen.setdefault(prefix, [])
            for a, b in spans:
                if start < b and a < stop:
                    raise StreamReuseError(
                        f"stream key {prefix} samples [{start}, {stop}) overlap an earlier draw [{a}, {b})"
                    )
            spans.append((start, stop))

    def __len__(self):
        return sum(len(v) for v in self._seen.values())
