import logging
from multiprocessing import Pool
from typing import Callable, Iterable, List, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    desc: str = "",
    progress: bool = True,
) -> List[R]:
    """Apply ``func`` to every item, results in input order whatever the worker count.

    ``func`` must be picklable (a module-level function or a partial of one) when
    ``workers > 1``.
    """
    items = list(items)
    bar = tqdm(total=len(items), desc=desc, disable=not progress, leave=False)
    try:
        if workers <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(func(item))
                bar.update(1)
            return results
        logger.debug("Running %d %s cells on %d workers", len(items), desc or "work", workers)
        with Pool(processes=workers) as pool:
            results = []
            for result in pool.imap(func, items):
                results.append(result)
                bar.update(1)
            return results
    finally:
        bar.close()


def flatten(chunks: Iterable[Iterable[T]]) -> List[T]:
    return [x for chunk in chunks for x in chunk]
