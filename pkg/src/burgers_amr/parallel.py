"""Contiguous-chunk dispatch onto an optional thread pool."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional


def chunk_bounds(n: int, parts: int) -> List[tuple]:
    parts = max(1, min(parts, n)) if n else 1
    base, extra = divmod(n, parts)
    out, lo = [], 0
    for p in range(parts):
        hi = lo + base + (1 if p < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


def map_chunks(pool: Optional[ThreadPoolExecutor], n: int, fn: Callable[[int, int], object]) -> list:
    """Run ``fn(lo, hi)`` over contiguous chunks of ``range(n)``; results in chunk order."""
    if pool is None or n <= 1:
        return [fn(0, n)]
    bounds = chunk_bounds(n, pool._max_workers)
    futures = [pool.submit(fn, lo, hi) for lo, hi in bounds]
    return [f.result() for f in futures]
