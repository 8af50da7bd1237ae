"""Order-preserving thread pool map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(fn, items, threads=1):
    """``[fn(x) for x in items]`` evaluated on up to ``threads`` workers.

    Results keep input order, so callers that merge them sequentially get
    the same output for any thread count.
    """
    items = list(items)
    if threads is None:
        threads = default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
