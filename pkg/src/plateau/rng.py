"""Counter-based random streams keyed by (seed, shard, block).

Every Monte Carlo sample belongs to a fixed-size block inside a shard; the
block's generator is a Philox instance whose key is derived from
``(seed, shard, block)``.  Results therefore depend only on the seed, the
shard count and the sample count, never on scheduling.
"""

from __future__ import annotations

import numpy as np

BLOCK_SIZE = 1 << 14


def stream(seed: int, shard: int, block: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), int(shard), int(block)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def shard_ranges(samples: int, shards: int) -> list[tuple[int, int]]:
    """Contiguous split of ``range(samples)`` into ``shards`` pieces."""
    if shards < 1:
        raise ValueError("need at least one shard")
    edges = [samples * s // shards for s in range(shards + 1)]
    return list(zip(edges[:-1], edges[1:]))


def blocks(count: int, block_size: int = BLOCK_SIZE):
    """Yield (block index, block length) covering ``count`` samples."""
    b = 0
    start = 0
    while start < count:
        n = min(block_size, count - start)
        yield b, n
        start += n
        b += 1
