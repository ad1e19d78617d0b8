from __future__ import annotations

import logging
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import Executor, Future, ProcessPoolExecutor, as_completed
from typing import Any, TypeVar

logger = logging.getLogger("oblatus.engine")

T = TypeVar("T")


class ReplicationEngine:
    """
    Worker pool for independent, seeded tasks:
    - workers == 1 runs tasks inline, in order
    - workers > 1 submits them to a process pool
    - results always come back in task order, whatever the completion order
    """

    def __init__(self, workers: int = 1) -> None:
        if int(workers) < 1:
            raise ValueError(f"invalid workers={workers}")
        self.workers = int(workers)
        self._pool: Executor | None = None

    def __enter__(self) -> ReplicationEngine:
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def _ensure_pool(self) -> Executor:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
            logger.info("engine started workers=%s", self.workers)
        return self._pool

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=True)
            self._pool = None
            logger.info("engine stopped")

    def map(self, fn: Callable[..., T], tasks: Iterable[Sequence[Any]], label: str = "task") -> list[T]:
        tasks = list(tasks)
        started = time.perf_counter()
        if self.workers == 1 or len(tasks) <= 1:
            out = []
            for i, args in enumerate(tasks):
                try:
                    out.append(fn(*args))
                except Exception:
                    logger.exception("%s failed index=%s", label, i)
                    raise
        else:
            pool = self._ensure_pool()
            futures: dict[Future, int] = {pool.submit(fn, *args): i for i, args in enumerate(tasks)}
            results: list[Any] = [None] * len(tasks)
            try:
                for f in as_completed(futures):
                    i = futures[f]
                    try:
                        results[i] = f.result()
                    except Exception:
                        logger.exception("%s failed index=%s", label, i)
                        raise
            finally:
                for f in futures:
                    f.cancel()
            out = results
        logger.info(
            "%s batch done count=%s workers=%s secs=%.3f", label, len(tasks), self.workers, time.perf_counter() - started
        )
        return out


def run_ordered(engine: ReplicationEngine | None, fn: Callable[..., T], tasks: Iterable[Sequence[Any]], label: str) -> list[T]:
    if engine is None:
        with ReplicationEngine(1) as inline:
            return inline.map(fn, tasks, label=label)
    return engine.map(fn, tasks, label=label)
