"""Fork-based process parallelism with ordered, deterministic gather.

Tasks must be pure functions of their arguments plus read-only payloads
registered before the pool forks.  Results are gathered in input order, so
output is bitwise-identical for any worker count or chunk size.
"""

from __future__ import annotations

import multiprocessing as mp

_PAYLOADS: dict = {}


def set_payload(key: str, value) -> None:
    """Register read-only state inherited by forked workers."""
    _PAYLOADS[key] = value


def get_payload(key: str):
    return _PAYLOADS[key]


def clear_payload(key: str) -> None:
    _PAYLOADS.pop(key, None)


def parallel_map(fn, items, workers: int = 1, chunksize: int | None = None) -> list:
    """Map fn over items, preserving order; workers <= 1 runs in-process."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (workers * 4))
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(fn, items, chunksize=chunksize)
