#!/usr/bin/env python3
"""
Ensemble runner.

Reps are split into fixed-size chunks; chunk c draws from its own stream
seeded with derive_seed(seed, c) and results are concatenated in chunk
order, so output does not depend on the number of worker threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

import numpy as np

from src.models.config import CHUNK_SIZE, thread_count
from src.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

T = TypeVar("T")

# kernel(rows, rng) -> array with leading dimension rows
Kernel = Callable[[int, np.random.Generator], np.ndarray]


def chunk_sizes(reps: int, chunk_size: int = CHUNK_SIZE) -> List[int]:
    if reps < 0:
        raise ValueError(f"reps must be non-negative, got {reps}")
    if chunk_size <= 0:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    full, rest = divmod(reps, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunked(
    kernel: Kernel,
    reps: int,
    seed: int,
    chunk_size: int = CHUNK_SIZE,
    max_workers: Optional[int] = None,
) -> np.ndarray:
    """
    Run a vectorised kernel over reps rows in seeded chunks.

    Args:
        kernel: Callable (rows, rng) -> array of shape (rows, ...)
        reps: Total number of rows
        seed: Base seed; chunk c uses derive_seed(seed, c)
        chunk_size: Rows per chunk
        max_workers: Thread cap (defaults to thread_count())

    Returns:
        Concatenated kernel output in chunk order
    """
    sizes = chunk_sizes(reps, chunk_size)
    if not sizes:
        return kernel(0, make_rng(derive_seed(seed, 0)))

    def run(c: int) -> np.ndarray:
        return kernel(sizes[c], make_rng(derive_seed(seed, c)))

    workers = max(1, min(max_workers or thread_count(), len(sizes)))
    logger.debug(f"Running {reps} reps in {len(sizes)} chunks on {workers} threads")
    if workers == 1:
        parts = [run(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(run, range(len(sizes))))
    return np.concatenate(parts, axis=0)


def map_reps(fn: Callable[[int], T], reps: int, max_workers: Optional[int] = None) -> List[T]:
    """Apply fn to rep indices 0..reps-1 on a thread pool, preserving order."""
    workers = max(1, min(max_workers or thread_count(), max(reps, 1)))
    if workers == 1:
        return [fn(k) for k in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, range(reps)))


def mean_and_stderr(values: np.ndarray) -> tuple:
    """Sample mean and standard error along axis 0 (pairwise summation via numpy)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise ValueError("Cannot average an empty sample")
    mean = values.mean(axis=0)
    if n == 1:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(n)
