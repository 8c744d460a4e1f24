"""Path-level parallelism with order-independent results.

Work is split into contiguous blocks of path ids; each block is simulated
as one vectorised batch and the blocks are concatenated back in path-id
order. Because every path draws from its own stream, the output does not
depend on the number of workers.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "HYBRID_SDDE_WORKERS"


def resolve_workers(workers=None):
    """Turn ``None`` / ``"auto"`` / an integer into a positive worker count."""
    if workers is None:
        workers = os.environ.get(WORKERS_ENV, "auto")
    if workers == "auto":
        return os.cpu_count() or 1
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def split_ids(n_paths, n_blocks):
    n_blocks = max(1, min(n_blocks, n_paths))
    return [b.tolist() for b in np.array_split(np.arange(n_paths), n_blocks) if len(b)]


def map_blocks(fn, args, n_paths, workers=1, block_size=None):
    """Apply ``fn(*args, path_ids)`` over blocks of ``range(n_paths)``.

    Returns the list of block results in path-id order.
    """
    workers = resolve_workers(workers)
    n_blocks = workers if block_size is None else -(-n_paths // block_size)
    blocks = split_ids(n_paths, n_blocks)
    if workers == 1 or len(blocks) == 1:
        return [fn(*args, ids) for ids in blocks]
    with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
        futures = [pool.submit(fn, *args, ids) for ids in blocks]
        return [f.result() for f in futures]
