"""Order-preserving map over independent tasks, optionally across processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count(n_jobs: int | None = None) -> int:
    """Requested workers capped by ``SPCR_THREADS`` and the CPU count."""
    cap = os.cpu_count() or 1
    env = os.environ.get("SPCR_THREADS")
    if env:
        cap = min(cap, max(1, int(env)))
    return cap if n_jobs is None else max(1, min(cap, n_jobs))


def pmap(func: Callable[[T], R], tasks: Iterable[T], n_jobs: int | None = None) -> list[R]:
    tasks = list(tasks)
    workers = min(worker_count(n_jobs), len(tasks))
    if workers <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
