"""Deterministic chunked random streams.

Work is split into fixed-size chunks; chunk ``i`` draws from
``SeedSequence(seed, spawn_key=(i,))``. Chunks are merged in index order,
so the output depends only on ``(seed, count)`` and never on the number of
workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK_SIZE = 1 << 16


def chunk_bounds(count: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(s, min(s + chunk_size, count)) for s in range(0, count, chunk_size)]


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def generate(
    seed: int,
    count: int,
    draw: Callable[[np.random.Generator, int], tuple[np.ndarray, ...]],
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> tuple[np.ndarray, ...]:
    """Call ``draw(rng, n)`` per chunk and concatenate each returned array."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be at least 1")
    bounds = chunk_bounds(count, chunk_size)

    def job(i: int):
        lo, hi = bounds[i]
        return draw(chunk_rng(seed, i), hi - lo)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(bounds))))
    else:
        parts = [job(i) for i in range(len(bounds))]
    return tuple(np.concatenate(cols) for cols in zip(*parts))
