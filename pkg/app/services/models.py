"""Builders for the spin Hamiltonians used by the estimation protocol."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import CapExceededError, ConfigError, ModelFileError
from app.services.operators import HamiltonianSpec, PauliString, canonicalize, commutator_norm

logger = logging.getLogger(__name__)

BOUNDARIES = ("periodic", "open")

BENCHMARK_J = 1.0
BENCHMARK_B_PRIME = (-0.24, -0.34, -0.62, -0.09)
BENCHMARK_J_PAIR = (0.5, 0.3)
BENCHMARK_B = (-1.0, -1.0, 1.0, 1.0)


@dataclass(frozen=True)
class HeisenbergParams:
    n_qubits: int
    J: float
    B_prime: Tuple[float, ...]
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n_qubits <= 0:
            raise ConfigError(f"n_qubits must be positive, got {self.n_qubits}")
        if len(self.B_prime) != self.n_qubits:
            raise ConfigError(
                f"B_prime has {len(self.B_prime)} entries, expected n_qubits = {self.n_qubits}"
            )
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}, got '{self.boundary}'")
        object.__setattr__(self, "B_prime", tuple(float(b) for b in self.B_prime))


@dataclass(frozen=True)
class DriverParams:
    n_qubits: int
    J_pair: Tuple[float, ...]
    B: Tuple[float, ...]

    def __post_init__(self):
        if self.n_qubits <= 0 or self.n_qubits % 2:
            raise ConfigError(f"pair driver needs an even, positive n_qubits, got {self.n_qubits}")
        if len(self.J_pair) != self.n_qubits // 2:
            raise ConfigError(
                f"J_pair has {len(self.J_pair)} entries, expected n_qubits/2 = {self.n_qubits // 2}"
            )
        if len(self.B) != self.n_qubits:
            raise ConfigError(f"B has {len(self.B)} entries, expected n_qubits = {self.n_qubits}")
        object.__setattr__(self, "J_pair", tuple(float(j) for j in self.J_pair))
        object.__setattr__(self, "B", tuple(float(b) for b in self.B))


@dataclass(frozen=True)
class Penalty:
    lam: float
    q_target: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError(f"penalty lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class ModelConfig:
    problem: HamiltonianSpec
    driver: HamiltonianSpec
    conserved: HamiltonianSpec
    penalty: Optional[Penalty] = None
    reference_sector: Optional[float] = None
    reference_level: Optional[int] = None
    label: str = "custom"
    provenance: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.problem.n_qubits
        for name, spec in (("driver", self.driver), ("conserved", self.conserved)):
            if spec.n_qubits != n:
                raise ConfigError(f"{name} acts on {spec.n_qubits} qubits, problem on {n}")

    @property
    def n_qubits(self) -> int:
        return self.problem.n_qubits

    @property
    def driver_params(self) -> Optional[DriverParams]:
        params = self.provenance.get("driver_params")
        return params if isinstance(params, DriverParams) else None

    def effective_problem(self) -> HamiltonianSpec:
        return apply_penalty(self)


def _bond(n_qubits: int, i: int, j: int, label: str) -> PauliString:
    return PauliString.from_sites(n_qubits, {i: label, j: label})


def _field(n_qubits: int, i: int, label: str) -> PauliString:
    return PauliString.from_sites(n_qubits, {i: label})


def build_heisenberg(p: HeisenbergParams) -> HamiltonianSpec:
    n = p.n_qubits
    bonds = [(i, i + 1) for i in range(n - 1)]
    if p.boundary == "periodic" and n > 2:
        bonds.append((n - 1, 0))
    terms = []
    for i, j in bonds:
        for label in "XYZ":
            terms.append((float(p.J), _bond(n, i, j, label)))
    for i, b in enumerate(p.B_prime):
        terms.append((b, _field(n, i, "Z")))
    return HamiltonianSpec(n, tuple(terms))


def build_driver(p: DriverParams) -> HamiltonianSpec:
    """Pairwise XY coupling on (0,1), (2,3), ... plus longitudinal fields"""
    n = p.n_qubits
    terms = []
    for k, j_pair in enumerate(p.J_pair):
        a, b = 2 * k, 2 * k + 1
        terms.append((j_pair, _bond(n, a, b, "X")))
        terms.append((j_pair, _bond(n, a, b, "Y")))
    for i, b in enumerate(p.B):
        terms.append((b, _field(n, i, "Z")))
    return HamiltonianSpec(n, tuple(terms))


def build_total_magnetization(n_qubits: int) -> HamiltonianSpec:
    return HamiltonianSpec(n_qubits, tuple((1.0, _field(n_qubits, i, "Z")) for i in range(n_qubits)))


def build_parity_x(n_qubits: int) -> HamiltonianSpec:
    return HamiltonianSpec(n_qubits, ((1.0, PauliString(n_qubits, "X" * n_qubits)),))


def _sum_of(n_qubits: int, label: str, weights: Sequence[float]) -> HamiltonianSpec:
    return HamiltonianSpec(
        n_qubits, tuple((float(w), _field(n_qubits, i, label)) for i, w in enumerate(weights))
    )


def build_penalty(q_op: HamiltonianSpec, q_target: float, lam: float) -> HamiltonianSpec:
    """Symbolic expansion of -lam (Q - q)^2"""
    if not lam > 0:
        raise ConfigError(f"penalty lambda must be positive, got {lam}")
    shifted = canonicalize(q_op - HamiltonianSpec.identity(q_op.n_qubits, q_target))
    if len(shifted) ** 2 > settings.penalty_term_budget:
        raise ConfigError(
            f"penalty expansion needs {len(shifted) ** 2} string products, "
            f"budget is {settings.penalty_term_budget}"
        )
    return canonicalize(-float(lam) * (shifted @ shifted))


def build_ghz_hamiltonians(
    n_qubits: int,
    B1: float = 1.0,
    B2: float = 1.0,
    B3: float = 1.0,
    B_vec: Optional[Sequence[float]] = None,
) -> Tuple[HamiltonianSpec, ...]:
    """H1 = B1 sum X, H2 = -B2 (sum Z)^2, H3 = -B3 (sum X)^2, H4 = sum B_i X_i, H_transverse

    H4 and H_transverse share the same form; H4 is used on the GHZ register and
    H_transverse on the full chain.
    """
    if n_qubits <= 0 or n_qubits % 2:
        raise ConfigError(f"GHZ preparation needs an even, positive n_qubits, got {n_qubits}")
    B_vec = tuple(float(b) for b in (B_vec if B_vec is not None else [1.0] * n_qubits))
    if len(B_vec) != n_qubits:
        raise ConfigError(f"B_vec has {len(B_vec)} entries, expected {n_qubits}")
    sum_x = _sum_of(n_qubits, "X", [1.0] * n_qubits)
    sum_z = _sum_of(n_qubits, "Z", [1.0] * n_qubits)
    h1 = canonicalize(float(B1) * sum_x)
    h2 = canonicalize(-float(B2) * (sum_z @ sum_z))
    h3 = canonicalize(-float(B3) * (sum_x @ sum_x))
    h4 = canonicalize(_sum_of(n_qubits, "X", B_vec))
    transverse = canonicalize(_sum_of(n_qubits, "X", B_vec))
    return h1, h2, h3, h4, transverse


def apply_penalty(model: ModelConfig) -> HamiltonianSpec:
    if model.penalty is None:
        return model.problem
    return canonicalize(
        model.problem + build_penalty(model.conserved, model.penalty.q_target, model.penalty.lam)
    )


def penalty_shift(model: ModelConfig, q: float) -> float:
    """Energy the penalty subtracts on sector q; add it back to get problem energies."""
    if model.penalty is None:
        return 0.0
    return model.penalty.lam * (float(q) - model.penalty.q_target) ** 2


def benchmark_problem_params(boundary: str = "open") -> HeisenbergParams:
    return HeisenbergParams(4, BENCHMARK_J, BENCHMARK_B_PRIME, boundary)


def benchmark_driver_params() -> DriverParams:
    return DriverParams(4, BENCHMARK_J_PAIR, BENCHMARK_B)


def benchmark_model_config(boundary: str = "open") -> ModelConfig:
    problem_params = benchmark_problem_params(boundary)
    driver_params = benchmark_driver_params()
    return ModelConfig(
        problem=build_heisenberg(problem_params),
        driver=build_driver(driver_params),
        conserved=build_total_magnetization(4),
        label=f"benchmark-heisenberg-{boundary}",
        provenance={"problem_params": problem_params, "driver_params": driver_params},
    )


def _spec_from_block(block, n_qubits: int, role: str):
    """Turn a parsed problem/driver/conserved block into a spec and its builtin params"""
    from app.api.schemas import BuiltinBlock

    if isinstance(block, BuiltinBlock):
        params = dict(block.params)
        try:
            if block.builtin == "heisenberg":
                built = HeisenbergParams(
                    n_qubits=n_qubits,
                    J=float(params.pop("J")),
                    B_prime=tuple(params.pop("B_prime")),
                    boundary=params.pop("boundary", "periodic"),
                )
                spec = build_heisenberg(built)
            elif block.builtin == "xy_driver":
                built = DriverParams(
                    n_qubits=n_qubits,
                    J_pair=tuple(params.pop("J_pair")),
                    B=tuple(params.pop("B")),
                )
                spec = build_driver(built)
            elif block.builtin == "total_magnetization":
                built = None
                spec = build_total_magnetization(n_qubits)
            else:
                raise ModelFileError(f"{role}: unknown builtin '{block.builtin}'")
        except KeyError as e:
            raise ModelFileError(f"{role}: builtin '{block.builtin}' is missing parameter {e}")
        except (TypeError, ValueError) as e:
            raise ModelFileError(f"{role}: invalid parameter value ({e})")
        if params:
            raise ModelFileError(f"{role}: unknown parameters {sorted(params)}")
        return spec, built

    if not block.terms:
        raise ModelFileError(f"{role}: terms list is empty")
    return HamiltonianSpec.from_terms(n_qubits, [(float(c), s) for c, s in block.terms]), None


def parse_model_file(text: str) -> ModelConfig:
    from app.api.schemas import ModelFile

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(e.msg, e.lineno, e.colno)
    try:
        doc = ModelFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ModelFileError(f"{location}: {first['msg']}")

    n = doc.n_qubits
    try:
        problem, problem_params = _spec_from_block(doc.problem, n, "problem")
        driver, driver_params = _spec_from_block(doc.driver, n, "driver")
        conserved, _ = _spec_from_block(doc.conserved, n, "conserved")
    except ModelFileError:
        raise
    except ConfigError as e:
        raise ModelFileError(str(e))

    for name, spec in (("problem", problem), ("driver", driver)):
        try:
            norm = commutator_norm(spec, conserved)
        except CapExceededError:
            logger.warning(f"Skipping commutation check for the {name}: {n} qubits exceeds the dense cap")
            continue
        if norm > settings.commutation_tolerance:
            raise ModelFileError(
                f"declared conserved quantity does not commute with the {name} Hamiltonian "
                f"(commutator norm {norm:.3e})"
            )

    penalty = None
    if doc.penalty is not None:
        try:
            penalty = Penalty(lam=doc.penalty.lam, q_target=doc.penalty.q)
        except ConfigError as e:
            raise ModelFileError(str(e))

    reference_sector = doc.reference.sector if doc.reference else None
    reference_level = doc.reference.level if doc.reference else None
    model = ModelConfig(
        problem=problem,
        driver=driver,
        conserved=conserved,
        penalty=penalty,
        reference_sector=reference_sector,
        reference_level=reference_level,
        label=doc.label or "custom",
        provenance={"problem_params": problem_params, "driver_params": driver_params},
    )
    logger.debug(f"Parsed model '{model.label}' on {n} qubits ({len(problem)} problem terms)")
    return model


def load_model_file(path: Union[str, Path]) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read model file {path}: {e}")
    model = parse_model_file(text)
    model.provenance["source"] = str(path)
    return model

