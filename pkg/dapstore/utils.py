import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SEED_MODULUS = 2 ** 64


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive an independent 64-bit seed from a base seed and integer keys.

    Args:
        seed: base seed (any non-negative int)
        keys: stream identifiers, e.g. scene index and demo index

    Returns:
        int: seed in [0, 2**64)
    """
    sequence = np.random.SeedSequence([int(seed) % SEED_MODULUS, *[int(k) for k in keys]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def offset_seed(seed: int, offset: int) -> int:
    """seed + offset wrapped into the u64 range"""
    return (int(seed) + int(offset)) % SEED_MODULUS


def parallel_map(fn: Callable[[T], R], items: Iterable[T], max_workers: int = 1) -> List[R]:
    """
    Apply fn to every item, fanning out to a thread pool when max_workers > 1.
    Results are returned in input order so callers stay deterministic.
    """
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Running {len(items)} jobs on {max_workers} workers")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
