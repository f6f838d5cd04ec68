"""Chunking of Monte Carlo budgets into independently seeded streams."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np
from rich.progress import Progress, TaskID

from .errors import ValidationFailure

R = TypeVar("R")


@dataclass(frozen=True)
class SampleChunk:
    """A slice of a sample budget with its own random stream."""

    chunk_index: int
    size: int
    offset: int
    stream_id: int = 0
    total_chunks: int = 0


def chunk_generator(seed: int, stream_id: int, chunk_index: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, stream, chunk)."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id, chunk_index))
    return np.random.Generator(np.random.Philox(sequence))


class ChunkPlan:
    """Split a sample budget into fixed-size chunks."""

    def __init__(self, total: int, chunk_size: int, stream_id: int = 0):
        if total < 0:
            raise ValidationFailure("samples", "sample count must be nonnegative")
        if chunk_size < 1:
            raise ValidationFailure("chunk_size", "chunk size must be positive")
        self.total = total
        self.chunk_size = chunk_size
        self.stream_id = stream_id

    def chunks(self) -> list[SampleChunk]:
        """
        Chunks in order; the last one may be short.

        The layout depends only on total and chunk_size, never on the
        number of worker threads.
        """
        count = -(-self.total // self.chunk_size)
        chunks = []
        for index in range(count):
            offset = index * self.chunk_size
            chunks.append(
                SampleChunk(
                    chunk_index=index,
                    size=min(self.chunk_size, self.total - offset),
                    offset=offset,
                    stream_id=self.stream_id,
                    total_chunks=count,
                )
            )
        return chunks

    def generator(self, seed: int, chunk: SampleChunk) -> np.random.Generator:
        return chunk_generator(seed, chunk.stream_id, chunk.chunk_index)


def run_chunks(
    plan: ChunkPlan,
    seed: int,
    work: Callable[[np.random.Generator, SampleChunk], R],
    threads: int = 1,
    progress: Progress | None = None,
    description: str = "Sampling",
) -> list[R]:
    """
    Run work on every chunk and return the results in chunk order.

    Args:
        plan: The chunk layout.
        seed: Root seed; each chunk derives its own stream from it.
        work: Function of (generator, chunk) producing a partial result.
        threads: Worker threads.
        progress: Optional progress display, advanced by samples.
        description: Progress task label.

    Returns:
        Partial results, index i belonging to chunk i.
    """
    chunks = plan.chunks()
    task_id: TaskID | None = None
    if progress:
        task_id = progress.add_task(description, total=plan.total)

    def run_one(chunk: SampleChunk) -> R:
        result = work(plan.generator(seed, chunk), chunk)
        if progress and task_id is not None:
            progress.advance(task_id, chunk.size)
        return result

    if threads <= 1 or len(chunks) <= 1:
        return [run_one(chunk) for chunk in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_one, chunks))
