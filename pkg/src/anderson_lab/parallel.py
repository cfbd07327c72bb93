"""Deterministic chunked parallel map.

Work is split into fixed chunks whose boundaries do not depend on the worker
count, and results are reassembled in chunk order, so outputs are identical
for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

_WORKERS = os.cpu_count() or 1


def set_workers(n: int | None) -> None:
    """Set the worker-count hint (``None`` restores the number of cores)."""
    global _WORKERS
    _WORKERS = max(1, int(n)) if n else (os.cpu_count() or 1)


def workers() -> int:
    return _WORKERS


def chunks(n_items: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, n_items)) for a in range(0, n_items, size)]


def chunked_map(fn: Callable[[int, int], object], n_items: int, size: int) -> Sequence:
    """``[fn(start, stop) for each chunk]`` evaluated on the worker pool."""
    parts = chunks(n_items, size)
    if _WORKERS == 1 or len(parts) == 1:
        return [fn(a, b) for a, b in parts]
    with ThreadPoolExecutor(max_workers=_WORKERS) as pool:
        return list(pool.map(lambda ab: fn(*ab), parts))
