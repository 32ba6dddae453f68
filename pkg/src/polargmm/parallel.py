"""Thread fan-out with results in input order, independent of worker count."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads=1):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(n, size):
    """Fixed ``(start, stop)`` slices; boundaries never depend on thread count."""
    return [(i, min(i + size, n)) for i in range(0, n, size)]
