"""Counter-based random streams and chunked trial execution.

All randomness is drawn from Philox streams keyed by ``(seed, tag, index)``.
Trials are split into fixed-size chunks, each with its own stream, so the
numbers a chunk sees do not depend on how many workers process the chunks.
"""
from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

DEFAULT_SEED = 0xDEC0DE
SEED_ENV = "DEPSKETCH_SEED"
CHUNK = 1024

T = TypeVar("T")


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else ``$DEPSKETCH_SEED``, else the fixed default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env, 0)
    return DEFAULT_SEED


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for the stream named by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunks(total: int, size: int = CHUNK) -> list[tuple[int, int, int]]:
    """``(chunk_index, start, stop)`` triples covering ``range(total)``."""
    return [(c, s, min(s + size, total)) for c, s in enumerate(range(0, total, size))]


def map_chunks(
    fn: Callable[[np.random.Generator, int, int], T],
    total: int,
    seed: int,
    tag: str,
    workers: int = 1,
    size: int = CHUNK,
) -> list[T]:
    """Run ``fn(rng, start, stop)`` over all chunks; results in chunk order.

    Chunk ``c`` always receives ``stream(seed, tag, c)``, so the output is
    identical for any ``workers``.
    """
    jobs = chunks(total, size)

    def run(job):
        c, start, stop = job
        return fn(stream(seed, tag, c), start, stop)

    if workers <= 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(parts), axis=0)
