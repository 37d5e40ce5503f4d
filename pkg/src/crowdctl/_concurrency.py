import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(n_tasks: int) -> int:
    """Thread budget from ``CROWDCTL_THREADS`` (0 or unset = auto)."""
    try:
        limit = int(os.environ.get("CROWDCTL_THREADS", "0"))
    except ValueError:
        limit = 0
    if limit <= 0:
        limit = os.cpu_count() or 1
    return max(1, min(limit, n_tasks))


def map_tasks(fn, items):
    items = list(items)
    workers = worker_count(len(items))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
