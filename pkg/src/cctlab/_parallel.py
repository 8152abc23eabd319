"""Seeded substreams and a fork-based block runner.

Every stochastic pipeline splits its replicates into fixed-size blocks. Block
``b`` draws from ``substream(seed, *key, b)`` no matter which worker runs it,
so results are bit-identical for any worker count.
"""
from __future__ import annotations

import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 2000

_TASK: Callable | None = None


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; stable across runs."""
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def block_bounds(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    n_blocks = math.ceil(n / block_size)
    return [(b * block_size, min(n, (b + 1) * block_size)) for b in range(n_blocks)]


def default_workers() -> int:
    raw = os.environ.get("CCTLAB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _call(item):
    return _TASK(item)


def parallel_map(fn: Callable[..., T], items: Sequence, workers: int = 1) -> list[T]:
    """Ordered map over ``items``; ``fn`` may be a closure (workers are forked)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    global _TASK
    prev, _TASK = _TASK, fn
    try:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as ex:
            return list(ex.map(_call, items))
    finally:
        _TASK = prev
