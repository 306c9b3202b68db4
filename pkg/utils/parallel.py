"""
Ordered parallel map over independent work chunks
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from loguru import logger

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], chunks: Sequence[T], threads: int = 1, label: str = "chunks") -> List[R]:
    """
    Apply `func` to every chunk, returning results in input order

    Chunking is fixed by the caller, so the thread count only changes
    scheduling and never the per-chunk computation.

    Args:
        func: work function
        chunks: independent work items
        threads: worker count (1 runs inline)
        label: name used in progress logs

    Returns:
        list of results aligned with `chunks`
    """
    total = len(chunks)
    if threads <= 1 or total <= 1:
        results = []
        for i, chunk in enumerate(chunks, 1):
            results.append(func(chunk))
            logger.debug(f"{label}: {i}/{total} done")
        return results

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(func, chunk) for chunk in chunks]
        results = []
        for i, future in enumerate(futures, 1):
            results.append(future.result())
            logger.debug(f"{label}: {i}/{total} done")
        return results
