import logging
from concurrent.futures import as_completed
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

from app.core.exceptions import ConfigError, PhysicsError
from app.tasks.executor import make_executor

logger = logging.getLogger(__name__)

P = TypeVar("P")
R = TypeVar("R")


def evaluate_grid(
    task: Callable[[P], R],
    points: Sequence[P],
    max_workers: Optional[int] = None,
    label: str = "grid",
) -> List[R]:
    """Run task on every point in parallel; results come back in point order"""
    if not points:
        return []
    results: Dict[int, R] = {}
    errors: Dict[int, Exception] = {}
    with make_executor(max_workers) as pool:
        futures = {pool.submit(task, point): n for n, point in enumerate(points)}
        for future in as_completed(futures):
            n = futures[future]
            try:
                results[n] = future.result()
            except Exception as e:
                errors[n] = e

    if errors:
        first = min(errors)
        error = errors[first]
        logger.error(f"{len(errors)} of {len(points)} {label} points failed")
        error_class = ConfigError if isinstance(error, ConfigError) else PhysicsError
        raise error_class(
            f"{len(errors)} of {len(points)} {label} points failed; first at index {first}: {error}"
        ) from error
    return [results[n] for n in range(len(points))]
