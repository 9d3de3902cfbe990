"""Seeded, chunked random streams and thread fan-out for Monte Carlo batches."""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, List, Tuple, TypeVar

import numpy as np

from hardedge.config import CHUNK_SIZE
from hardedge.schemas import RngSpec

logger = logging.getLogger(__name__)

T = TypeVar("T")


def make_rng(spec: RngSpec, chunk: int = 0) -> np.random.Generator:
    """Return the generator for one chunk of one stream.

    The generator depends only on (seed, stream, chunk), so a batch split into
    fixed-size chunks is reproduced bit for bit whatever the worker count.
    """

    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(spec.stream, chunk)))


def chunk_bounds(total: int, chunk_size: int = CHUNK_SIZE) -> List[Tuple[int, int, int]]:
    """Split ``total`` items into (chunk_index, start, stop) triples."""

    return [
        (index, start, min(start + chunk_size, total))
        for index, start in enumerate(range(0, total, chunk_size))
    ]


def run_chunked(
    work: Callable[[np.random.Generator, int], T],
    total: int,
    spec: RngSpec,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> List[T]:
    """Run ``work(rng, size)`` once per chunk and return results in chunk order.

    Args:
        work: Callable producing the output for ``size`` items from ``rng``.
        total: Number of items (paths, draws) requested.
        spec: Seed and stream of the batch.
        workers: Thread count; results do not depend on it.
        chunk_size: Items per chunk.
    """

    bounds = chunk_bounds(total, chunk_size)
    logger.debug("Running %d items in %d chunks on %d workers", total, len(bounds), workers)

    def task(bound: Tuple[int, int, int]) -> T:
        index, start, stop = bound
        return work(make_rng(spec, index), stop - start)

    if workers <= 1 or len(bounds) <= 1:
        return [task(bound) for bound in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, bounds))


def iter_chunks(
    work: Callable[[np.random.Generator, int], T],
    spec: RngSpec,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> Iterator[T]:
    """Yield ``work(rng, chunk_size)`` for chunks 0, 1, 2, ... until the caller stops.

    Chunks run in waves of ``workers`` threads and are yielded in chunk order,
    so a consumer that stops on a data-dependent condition sees the same
    prefix for every worker count.
    """

    workers = max(1, workers)
    index = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            wave = [pool.submit(work, make_rng(spec, i), chunk_size) for i in range(index, index + workers)]
            for future in wave:
                yield future.result()
            index += workers
