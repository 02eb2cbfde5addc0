"""Deterministic thread-parallel map.

Work items are processed by a thread pool but results are always returned
(and therefore reduced by callers) in input order, so floating-point sums do
not depend on the number of threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "INCDOS_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else the ``INCDOS_THREADS`` environment variable, else 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def ordered_map(func: Callable[[T], R], items: Iterable[T], threads: int | None = None,
                window: int = 64) -> Iterator[R]:
    """Yield ``func(item)`` in input order using up to ``threads`` workers.

    At most ``window * threads`` results are held in flight.
    """
    threads = resolve_threads(threads)
    if threads == 1:
        for item in items:
            yield func(item)
        return
    items = iter(items)
    pending = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        limit = max(1, window) * threads
        for item in items:
            pending.append(pool.submit(func, item))
            if len(pending) >= limit:
                yield pending.pop(0).result()
        while pending:
            yield pending.pop(0).result()
