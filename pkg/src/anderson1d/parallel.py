"""Deterministic parallel map.

Tasks share nothing and results come back in submission order, so every
reduction downstream sees the same sequence whatever the worker count.
"""

from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
