"""Deterministic thread-pool map over fixed-size work blocks."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

#: work items per block; fixed so results never depend on the worker count
BLOCK_SIZE = 64
ENV_THREADS = "QPBLOCK_THREADS"


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(ENV_THREADS, "1"))
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def map_blocks(fn: Callable[[np.ndarray], np.ndarray], items: np.ndarray,
               threads: int | None = None, block: int = BLOCK_SIZE) -> np.ndarray:
    """Apply ``fn`` to consecutive blocks of ``items`` and concatenate in order.

    The partition depends only on ``block``, so the output is bitwise
    identical for any number of worker threads.
    """
    items = np.asarray(items)
    chunks = [items[i:i + block] for i in range(0, len(items), block)]
    threads = resolve_threads(threads)
    if threads == 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)
