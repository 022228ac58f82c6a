import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "TGFUSE_THREADS"


def thread_limit(default: int = 1) -> int:
    """Worker cap from TGFUSE_THREADS, falling back to `default`."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


class WorkerPool:
    """Fan a pure function out over items; results come back in input order."""

    def __init__(self, max_workers: Optional[int] = None) -> None:
        self.max_workers = max_workers if max_workers is not None else thread_limit()
        if self.max_workers < 1:
            raise ConfigurationError(f"worker count must be >= 1, got {self.max_workers}")

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self.max_workers == 1 or len(items) < 2:
            return [fn(item) for item in items]
        logger.debug("worker pool workers=%d items=%d", self.max_workers, len(items))
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            return list(executor.map(fn, items))
