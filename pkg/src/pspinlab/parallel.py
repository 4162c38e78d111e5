"""Thread-based map helper.

Work items carry their own counter-based random substreams, so the result is
a pure function of (seed, index) and identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor

__all__ = ["parallel_map"]


def parallel_map(fn, items, workers=1):
    """Apply fn over items, preserving order.  workers <= 1 runs inline."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
