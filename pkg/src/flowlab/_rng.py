"""Counter-based random substreams.

Every Monte Carlo routine draws from a Philox generator keyed on
``(seed, *keys)`` so that results depend only on the seed and the logical
position of a chunk of work, never on worker count or call order.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 1 << 14


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def substream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    n: int,
    seed: int,
    keys: Sequence,
    work: Callable[[int, np.random.Generator], np.ndarray],
    workers: int = 1,
) -> np.ndarray:
    """Run ``work(size, rng)`` over fixed-size chunks and concatenate in chunk order."""
    sizes = chunk_sizes(n)
    rngs = [substream(seed, *keys, i) for i in range(len(sizes))]
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, sizes, rngs))
    else:
        parts = [work(s, r) for s, r in zip(sizes, rngs)]
    return np.concatenate(parts, axis=0)
