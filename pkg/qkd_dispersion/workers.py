import os
import logging
import typing
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

THREADS_ENV = "QKD_DISPERSION_THREADS"


def get_threads_from_env() -> typing.Optional[int]:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        logger.warning(f"ignoring {THREADS_ENV}={value!r}: not an integer")
        return None
    return threads if threads > 0 else None


def resolve_threads(threads=None):
    """Worker count: explicit value, then the environment, then all CPUs."""
    if threads is None:
        threads = get_threads_from_env()
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads!r}")
    return threads


class WorkerPool:
    """Ordered map over a lazily created thread pool.

    Results always come back in input order, so callers see the same
    sequence whatever the worker count.
    """

    def __init__(self, threads=None):
        self.threads = resolve_threads(threads)
        self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.clear()
        # Return False to re-raise any potential exceptions
        return False

    def _get_executor(self):
        if self._executor is None:
            logger.debug(f"starting worker pool with {self.threads} threads")
            self._executor = ThreadPoolExecutor(
                max_workers=self.threads, thread_name_prefix="qkd-worker"
            )
        return self._executor

    def map(self, func, items):
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [func(item) for item in items]
        return list(self._get_executor().map(func, items))

    def clear(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
