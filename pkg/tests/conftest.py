from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from app.services.evolution import PropagationSettings
from app.services.models import benchmark_model_config
from app.services.operators import HamiltonianSpec, PauliString, canonicalize
from app.services.protocol import RamseySeries, TauGrid

MODELS_DIR = Path(__file__).resolve().parent.parent / "models"

# published values; fields are quoted to two decimals
PUBLISHED_GROUND = -6.524593
PUBLISHED_EXCITED = (-3.80585, -1.09182, 0.53380, 1.84517)
PUBLISHED_SECTOR_PLUS2 = (-4.28498, -1.68559, 0.97265, 2.37795)
PUBLISHED_SECTOR_MINUS2 = (-3.41949, -0.36855)
PUBLISHED_TOLERANCE = 0.05


@pytest.fixture
def benchmark_model():
    return benchmark_model_config("open")


@pytest.fixture
def model_path():
    return MODELS_DIR / "heisenberg4_open.model"


@pytest.fixture
def penalty_model_path():
    return MODELS_DIR / "heisenberg4_penalty.model"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fast_prop():
    return PropagationSettings(steps_per_unit_time=50, method="magnus4")


def random_spec(rng, n_qubits: int, n_terms: int) -> HamiltonianSpec:
    terms = []
    for _ in range(n_terms):
        factors = "".join(rng.choice(list("IXYZ"), size=n_qubits))
        terms.append((float(rng.normal()), PauliString(n_qubits, factors)))
    return HamiltonianSpec(n_qubits, tuple(terms))


def term_listing(spec: HamiltonianSpec):
    return [(coeff, string.factors) for coeff, string in canonicalize(spec).terms]


def synthetic_series(probabilities_of_tau, tau_max: float = 70.0, L: int = 1000) -> RamseySeries:
    """Series without a physical plan, for testing the spectral analysis alone"""
    grid = TauGrid(0.0, tau_max, L)
    taus = grid.values
    return RamseySeries(plan=SimpleNamespace(tau_grid=grid), taus=taus, probabilities=probabilities_of_tau(taus))
