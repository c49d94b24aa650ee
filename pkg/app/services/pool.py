"""
Path Pool - chunked, order-preserving parallel map over path indices
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

from app.config import settings

logger = logging.getLogger("pool")


def chunk_ranges(n_paths: int, chunk_size: int) -> List[Tuple[int, int]]:
    """[(start, stop), ...] covering 0..n_paths in order"""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    return [(lo, min(lo + chunk_size, n_paths)) for lo in range(0, n_paths, chunk_size)]


class PathPool:
    """
    Runs `func(start, stop)` over chunks of path indices.

    Results come back in chunk order whatever the schedule, so any fold over
    them is independent of the worker count.
    """

    def __init__(self, workers: Optional[int] = None, chunk_size: Optional[int] = None,
                 on_progress: Optional[Callable[[int, int], None]] = None):
        self.workers = workers if workers is not None else (settings.workers or 1)
        self.chunk_size = chunk_size or settings.chunk_size
        self.on_progress = on_progress

    def map(self, func: Callable[[int, int], object], n_paths: int) -> List[object]:
        ranges = chunk_ranges(n_paths, self.chunk_size)
        workers = max(1, min(self.workers, len(ranges), os.cpu_count() or 1))
        results: List[object] = []
        if workers == 1:
            for start, stop in ranges:
                results.append(func(start, stop))
                self._progress(stop, n_paths)
            return results

        logger.debug(f"mapping {len(ranges)} chunks on {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            starts: Sequence[int] = [r[0] for r in ranges]
            stops: Sequence[int] = [r[1] for r in ranges]
            for (_, stop), result in zip(ranges, executor.map(func, starts, stops)):
                results.append(result)
                self._progress(stop, n_paths)
        return results

    def _progress(self, done: int, total: int):
        if self.on_progress is not None:
            self.on_progress(done, total)


def bind(func: Callable, *args, **kwargs) -> Callable[[int, int], object]:
    """Picklable `func(*args, start, stop, **kwargs)` for PathPool.map"""
    return partial(func, *args, **kwargs)
