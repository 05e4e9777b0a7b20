"""Trial sharding.  Results never depend on the number of workers: each trial's
seed is fixed by its index, and shards are concatenated in index order."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def map_shards(fn, seeds, jobs: int = 1, axis: int = 0):
    """``fn(seed_block)`` over contiguous blocks of ``seeds``, concatenated in order.

    The compiled batch kernels release the GIL, so threads run them in parallel.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    jobs = max(1, int(jobs))
    if jobs == 1 or seeds.size < 2 * jobs:
        return fn(seeds)
    blocks = np.array_split(seeds, jobs)
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(fn, blocks))
    return np.concatenate(parts, axis=axis)
