"""Ordered parallel map over fixed chunks.

Work is split into chunks whose boundaries depend only on the problem
size, and results come back in chunk order, so any reduction done by the
caller sees the same sequence whatever the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

from .errors import ConfigError

T = TypeVar("T")


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``RFA_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("RFA_THREADS", "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"RFA_THREADS must be an integer, got {env!r}") from None
    if threads < 1:
        raise ConfigError(f"thread count must be positive, got {threads}")
    return int(threads)


def chunk_bounds(n_items: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(n_items, s + chunk)) for s in range(0, n_items, chunk)]


def map_chunks(fn: Callable[[int, int], T], n_items: int, chunk: int, threads: int | None = None) -> list[T]:
    bounds = chunk_bounds(n_items, max(1, int(chunk)))
    workers = min(resolve_threads(threads), max(1, len(bounds)))
    if workers == 1:
        return [fn(s, e) for s, e in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
