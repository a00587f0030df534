import os

import psutil
from dotenv import load_dotenv
from loguru import logger

load_dotenv()


def default_workers():
    """LANDING_NUM_THREADS if set, else the number of physical cores."""
    configured = os.environ.get("LANDING_NUM_THREADS")
    if configured:
        try:
            value = int(configured)
            if value >= 1:
                return value
        except ValueError:
            pass
        logger.warning(f"Ignoring invalid LANDING_NUM_THREADS={configured!r}")
    return psutil.cpu_count(logical=False) or os.cpu_count() or 1


def resolve_workers(requested=None, tasks=None):
    """
    Worker count for a thread pool: the explicit request, capped by
    LANDING_NUM_THREADS, and never more than the number of tasks.
    """
    cap = default_workers()
    workers = cap if requested is None else max(1, min(int(requested), cap))
    if tasks is not None:
        workers = max(1, min(workers, tasks))
    return workers
