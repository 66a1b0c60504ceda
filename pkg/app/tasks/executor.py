from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from app.core.config import settings


def make_executor(max_workers: Optional[int] = None) -> ThreadPoolExecutor:
    """Worker pool for grid evaluation, capped by settings.max_workers unless overridden"""
    workers = max_workers or settings.max_workers
    return ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="gsr-grid")
