"""Thread-pool helpers with an order-preserving contract.

Work is split into chunks whose boundaries do not depend on the number of
threads, and results are consumed in submission order, so every reduction
happens in the same order whatever the pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "HECKE_VIRT_THREADS"

_default_threads = None


def set_default_threads(n):
    global _default_threads
    _default_threads = None if n is None else max(1, int(n))


def resolve_threads(n=None) -> int:
    if n is not None:
        return max(1, int(n))
    if _default_threads is not None:
        return _default_threads
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def ordered_map(fn, items, threads=None, window=None):
    """Yield ``fn(item)`` in input order, evaluating up to ``threads`` at once."""
    threads = resolve_threads(threads)
    items = list(items)
    if threads == 1 or len(items) <= 1:
        for it in items:
            yield fn(it)
        return
    window = window or 2 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = []
        pos = 0
        while pos < len(items) or pending:
            while pos < len(items) and len(pending) < window:
                pending.append(pool.submit(fn, items[pos]))
                pos += 1
            yield pending.pop(0).result()


def chunked(n_items: int, size: int):
    return [(i, min(i + size, n_items)) for i in range(0, n_items, size)]
