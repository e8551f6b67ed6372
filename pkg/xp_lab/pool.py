"""
Bounded process pool with an order-preserving merge.

Results come back in input order whatever the worker count, so report bodies
are byte-identical between serial and parallel runs.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """Apply fn to every item; fn and the items must pickle when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(jobs, len(items))
    logger.info(f"[Pool] Running {len(items)} tasks on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
