from pathlib import Path
from typing import Union

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

registry = CollectorRegistry()

propagation_steps = Counter(
    "gsr_propagation_steps",
    "Integrator steps taken by the time-dependent propagator",
    ["method"],
    registry=registry,
)

ramsey_points = Counter(
    "gsr_ramsey_points",
    "Ramsey grid points evaluated",
    ["mode"],
    registry=registry,
)

run_once_seconds = Histogram(
    "gsr_run_once_seconds",
    "Wall time of a single protocol execution",
    registry=registry,
    buckets=(0.001, 0.01, 0.1, 0.5, 1.0, 5.0, 30.0),
)

sector_diagonalizations = Counter(
    "gsr_sector_diagonalizations",
    "Sector eigensystems computed",
    ["hamiltonian"],
    registry=registry,
)

spectral_peaks = Counter(
    "gsr_spectral_peaks",
    "Peaks reported by the spectral analyzer",
    registry=registry,
)


def write_metrics(path: Union[str, Path]) -> None:
    """Dump the registry in textfile-collector format"""
    write_to_textfile(str(path), registry)
