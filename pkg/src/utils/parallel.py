"""
Ordered fan-out over worker threads
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    max_workers: int = 1,
    desc: Optional[str] = None,
    progress: bool = False
) -> List[R]:
    """
    Apply fn to every item, returning results in input order

    Args:
        fn: Work function; must not share mutable state between items
        items: Work items
        max_workers: Thread count; 1 runs inline on the calling thread
        desc: Progress bar label
        progress: Show a tqdm progress bar

    Returns:
        List of results aligned with items
    """
    work = list(items)
    if max_workers <= 1:
        iterator = tqdm(work, desc=desc, disable=not progress, leave=False)
        return [fn(item) for item in iterator]

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        # executor.map yields in submission order
        mapped = pool.map(fn, work)
        return list(tqdm(mapped, total=len(work), desc=desc, disable=not progress, leave=False))
