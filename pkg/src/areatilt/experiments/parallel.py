"""Replica scheduling.  Work is cut into fixed chunks keyed by (seed, stream, chunk),
so results do not depend on how many workers run them."""

import os
from concurrent.futures import ProcessPoolExecutor

from ..errors import ConfigError

WORKERS_ENV = "AREATILT_WORKERS"
CHUNK = 1000


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def chunks(total, size=CHUNK):
    """(index, start, count) triples covering ``total`` items."""
    return [(i, s, min(size, total - s)) for i, s in enumerate(range(0, total, size))]


def run_tasks(fn, tasks):
    """Map ``fn`` over argument tuples, results in task order."""
    n = worker_count()
    if n == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))
