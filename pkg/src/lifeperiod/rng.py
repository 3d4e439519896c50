"""Counter-based random streams and the replica-block runner.

Every stochastic estimator splits its replicas into fixed-size blocks.  Block
``b`` of an operation tagged ``tag`` draws from a Philox generator keyed by
``(master_seed, tag, b)``, so the draws a replica sees do not depend on how
many worker processes share the work.  Reductions are merged in block order.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 1 << 15

T = TypeVar("T")


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    """Generator for sub-stream ``index`` of operation ``tag`` under ``seed``."""
    if seed is None:
        raise ValueError("a seed is required for every stochastic operation")
    seq = np.random.SeedSequence(int(seed), spawn_key=(tag_key(tag), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def block_sizes(replicas: int, block_size: int = BLOCK_SIZE) -> list[int]:
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    full, rest = divmod(int(replicas), block_size)
    return [block_size] * full + ([rest] if rest else [])


def _call_block(args):
    fn, index, size, seed, tag = args
    return fn(index, size, stream(seed, tag, index))


def run_blocks(
    fn: Callable[[int, int, np.random.Generator], T],
    replicas: int,
    seed: int,
    tag: str,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> list[T]:
    """Run ``fn(block_index, block_replicas, rng)`` over all blocks, in block order.

    ``fn`` must be picklable (a module-level function or a ``functools.partial``
    of one) when ``workers > 1``.
    """
    sizes = block_sizes(replicas, block_size)
    jobs = [(fn, i, n, seed, tag) for i, n in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [_call_block(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_call_block, jobs))


def merge_sums(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum block results left to right (fixed order keeps floats bit-stable)."""
    out = np.array(parts[0], copy=True)
    for p in parts[1:]:
        out = out + p
    return out
