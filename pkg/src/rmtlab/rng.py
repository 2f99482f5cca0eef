"""Splittable, counter-based random streams.

Every stream is a Philox4x64 generator keyed by ``(seed, stream_id)``; no
global RNG state is ever touched.  Monte Carlo loops split their trials into
fixed-size blocks and give block ``b`` the stream ``derive_stream(seed, b)``,
so the draws a trial sees never depend on how blocks are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

RNG_NAME = f"numpy-Philox4x64-10/numpy-{np.__version__}"
BLOCK_SIZE = 1024
WORKERS_ENV = "RMT_WORKERS"

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


@dataclass
class RngStream:
    """A single-owner random stream; do not share one between threads."""

    seed: int
    stream_id: int
    generator: np.random.Generator = field(repr=False, compare=False)

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)


def derive_stream(seed: int, stream_id: int) -> RngStream:
    seed = int(seed)
    stream_id = int(stream_id)
    if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
        raise ValueError("seed and stream_id must be unsigned 64-bit integers")
    key = np.array([seed, stream_id], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    return RngStream(seed, stream_id, np.random.Generator(bitgen))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return value


def block_sizes(trials: int, block_size: int = BLOCK_SIZE) -> list[int]:
    """Sizes of the trial blocks; the last block may be short."""
    full, rest = divmod(int(trials), block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[RngStream, int], T],
    trials: int,
    seed: int,
    block_size: int = BLOCK_SIZE,
    stream_offset: int = 0,
) -> list[T]:
    """Run ``fn(stream, size)`` once per trial block, results in block order.

    Block ``b`` always receives ``derive_stream(seed, stream_offset + b)``,
    so the output is independent of the worker count.
    """
    sizes = block_sizes(trials, block_size)

    def task(b: int) -> T:
        return fn(derive_stream(seed, stream_offset + b), sizes[b])

    workers = min(worker_count(), max(len(sizes), 1))
    if workers <= 1:
        return [task(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(len(sizes))))


def concat_blocks(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts, axis=0) if parts else np.empty(0)
