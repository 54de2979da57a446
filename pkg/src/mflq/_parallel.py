"""Worker-count policy shared by the parallel loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """``MFLQ_THREADS`` if set to a positive integer, else the CPU count."""
    raw = os.environ.get("MFLQ_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def pmap(fn, items) -> list:
    """Order-preserving map over a thread pool (numpy releases the GIL)."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
