"""Shared plumbing: worker pools and seed derivation.

Randomized pipelines derive one integer seed per replicate from the
caller's seed, run replicates through ``ordered_map``, and reduce in
replicate-index order. Results are therefore byte-identical for any
worker count: the pool only changes scheduling, never the arithmetic
or the reduction order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

THREADS_ENV = "LATENT_KRIG_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Worker threads to use, from LATENT_KRIG_THREADS (default 1)."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def ordered_map(fn: Callable[[T], R], items: Sequence[T],
                workers: int | None = None) -> list[R]:
    """Map ``fn`` over ``items`` preserving input order.

    ``workers=None`` reads the environment; 1 runs inline. Threads suit
    the workloads here because the heavy lifting releases the GIL inside
    BLAS calls.
    """
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def member_seeds(rng_seed: int, count: int) -> list[int]:
    """Derive ``count`` member seeds from one seed, stable across platforms."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    ss = np.random.SeedSequence(rng_seed)
    return [int(s) for s in ss.generate_state(count, np.uint64)]


def chunk_indices(values: Iterable[int], size: int) -> list[list[int]]:
    """Split values into consecutive chunks of ``size`` (last may be short)."""
    vals = list(values)
    return [vals[i:i + size] for i in range(0, len(vals), size)]
