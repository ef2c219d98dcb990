import logging
from typing import Callable, Sequence, TypeVar

import anyio
from anyio import CapacityLimiter, to_thread

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def chunked(items: Sequence[T], size: int) -> list[Sequence[T]]:
    return [items[start : start + size] for start in range(0, len(items), size)]


async def _fan_out(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    results: list[R | None] = [None] * len(items)
    failures: dict[int, Exception] = {}
    limiter = CapacityLimiter(workers)

    async with anyio.create_task_group() as tg:

        async def run(index: int, item: T) -> None:
            try:
                results[index] = await to_thread.run_sync(fn, item, limiter=limiter)
            except Exception as exc:
                failures[index] = exc

        for index, item in enumerate(items):
            tg.start_soon(run, index, item)

    if failures:
        raise failures[min(failures)]
    return results  # type: ignore[return-value]


def map_ordered(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Apply `fn` to every item on up to `workers` threads; results keep input order.

    Every item runs even after a failure; the failure with the lowest index is then
    raised, so errors are as deterministic as results.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Fanning {len(items)} work items out to {workers} workers")
    return anyio.run(_fan_out, fn, items, workers)
