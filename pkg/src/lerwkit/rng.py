"""Counter-derived random streams and a deterministic chunked parallel map.

Trials are split into fixed-size chunks whose boundaries depend only on the
trial count.  Chunk ``i`` of a task tagged ``tag`` draws from
``SeedSequence(master, spawn_key=(tag_id, i))``, and chunk results are merged
in chunk order, so the worker count never changes any output.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

from ._kernels import seed_numba

T = TypeVar("T")

DEFAULT_CHUNK = 64


def tag_id(tag: str | int | Sequence) -> tuple[int, ...]:
    """Map a task tag to a tuple of non-negative integers for ``spawn_key``."""
    if isinstance(tag, int):
        return (tag,)
    if isinstance(tag, (tuple, list)):
        out: tuple[int, ...] = ()
        for t in tag:
            out += tag_id(t)
        return out
    if isinstance(tag, float):
        tag = repr(tag)
    digest = hashlib.sha256(str(tag).encode()).digest()
    return (int.from_bytes(digest[:8], "little"),)


def stream(master: int, tag, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master), spawn_key=tag_id(tag) + (int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def numba_seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def chunk_bounds(trials: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    return [(s, min(chunk, trials - s)) for s in range(0, trials, chunk)]


def chunked_map(
    fn: Callable[[np.random.Generator, int, int], T],
    trials: int,
    master: int,
    tag,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> list[T]:
    """Run ``fn(rng, size, chunk_index)`` over all chunks; results in chunk order.

    Before each call the compiled-kernel generator of the executing thread is
    seeded from the chunk stream, so kernels consume a reproducible sequence.
    """
    bounds = chunk_bounds(trials, chunk)

    def run(i: int) -> T:
        rng = stream(master, tag, i)
        seed_numba(numba_seed_from(rng))
        return fn(rng, bounds[i][1], i)

    if workers <= 1 or len(bounds) <= 1:
        return [run(i) for i in range(len(bounds))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(bounds))))
