import pytest

from app.core.exceptions import ConfigError, PhysicsError
from app.tasks.grid_tasks import evaluate_grid


class TestEvaluateGrid:
    def test_results_in_point_order(self):
        assert evaluate_grid(lambda x: x * x, list(range(20)), max_workers=4) == [x * x for x in range(20)]

    def test_empty_grid(self):
        assert evaluate_grid(lambda x: x, []) == []

    def test_failures_are_aggregated(self):
        def task(x):
            if x in (3, 5):
                raise ValueError(f"bad point {x}")
            return x

        with pytest.raises(PhysicsError, match="2 of 8 tau points failed; first at index 3"):
            evaluate_grid(task, list(range(8)), max_workers=2, label="tau")

    def test_config_errors_keep_their_class(self):
        def task(x):
            raise ConfigError("bad parameter")

        with pytest.raises(ConfigError):
            evaluate_grid(task, [1, 2])
