"""Bounded-worker map over independent work items."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Apply ``fn`` over ``items`` with up to ``jobs`` threads.

    Results keep the input order, so the output is identical for any job
    count; work items must be independent.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
