"""Ramsey-type ground-state energy protocol built on forward and reverse adiabatic ramps."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core import metrics
from app.core.config import settings
from app.core.exceptions import ConfigError, PhysicsError
from app.services.evolution import (
    DrivenSystem,
    PropagationSettings,
    RampSchedule,
    Schedule,
    StaticEvolver,
    interpolate,
)
from app.services.models import (
    ModelConfig,
    apply_penalty,
    build_ghz_hamiltonians,
    build_parity_x,
    penalty_shift,
)
from app.services.operators import (
    HamiltonianSpec,
    StateVector,
    basis_label,
    commutator_norm,
    expectation,
    materialize,
)
from app.services.symmetry import (
    ReferenceState,
    SectorEigensystem,
    decompose,
    diagonalize_sector,
    sector_block,
    select_reference,
)
from app.tasks.grid_tasks import evaluate_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TauGrid:
    tau_min: float
    tau_max: float
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ConfigError(f"tau grid needs L >= 2, got {self.L}")
        if not self.tau_min < self.tau_max:
            raise ConfigError(f"tau_min ({self.tau_min}) must be below tau_max ({self.tau_max})")
        if self.tau_min < 0:
            raise ConfigError(f"tau_min must be nonnegative, got {self.tau_min}")

    @property
    def span(self) -> float:
        return self.tau_max - self.tau_min

    @property
    def spacing(self) -> float:
        return self.span / (self.L - 1)

    @property
    def values(self) -> np.ndarray:
        taus = self.tau_min + (np.arange(self.L) / (self.L - 1)) * self.span
        taus[0] = self.tau_min
        taus[-1] = self.tau_max
        return taus


@dataclass(frozen=True, eq=False)
class RamseyPlan:
    model: ModelConfig
    ground_sector_q: float
    reference: ReferenceState
    T: float
    tau_grid: TauGrid
    prop: PropagationSettings
    driver_system: SectorEigensystem
    problem_system: SectorEigensystem
    initial: StateVector
    shots: Optional[int] = None
    seed: int = 0
    level: int = 0
    relative_phase: float = 0.0
    cache_asp: bool = True

    @property
    def problem(self) -> HamiltonianSpec:
        return apply_penalty(self.model)

    @property
    def reference_energy(self) -> float:
        return self.reference.energy_problem

    @property
    def penalty_shift(self) -> float:
        return penalty_shift(self.model, self.ground_sector_q)


@dataclass(frozen=True, eq=False)
class RamseySeries:
    plan: RamseyPlan
    taus: np.ndarray
    probabilities: np.ndarray
    mode: str = "exact"

    @property
    def tau_grid(self) -> TauGrid:
        return self.plan.tau_grid


def prepare_initial(
    sys_d: SectorEigensystem,
    ref: ReferenceState,
    relative_phase: float = 0.0,
    level: int = 0,
) -> StateVector:
    """(|driver level> + e^{i phase} |reference>) / sqrt 2"""
    ground = sys_d.state(level)
    overlap = abs(ground.overlap(ref.state))
    if overlap > settings.orthogonality_tolerance:
        raise PhysicsError(
            f"driver level {level} in sector q = {sys_d.sector.q_value} overlaps the reference "
            f"(|<g|ref>| = {overlap:.3e})"
        )
    weight = 1.0 / math.sqrt(2.0)
    return StateVector.superpose([ground, ref.state], [weight, weight * np.exp(1j * relative_phase)])


def build_plan(
    model: ModelConfig,
    ground_sector_q: float,
    T: float,
    tau_grid: TauGrid,
    prop: Optional[PropagationSettings] = None,
    shots: Optional[int] = None,
    seed: int = 0,
    level: int = 0,
    relative_phase: float = 0.0,
    cache_asp: bool = True,
    reference_sector: Optional[float] = None,
    reference_level: Optional[int] = None,
) -> RamseyPlan:
    if not T > 0:
        raise ConfigError(f"ramp duration T must be positive, got {T}")
    if shots is not None and shots <= 0:
        raise ConfigError(f"shots must be positive, got {shots}")
    h_p = apply_penalty(model)
    dec = decompose(model.conserved)
    if reference_sector is None:
        reference_sector = model.reference_sector
    if reference_level is None:
        reference_level = model.reference_level
    reference = select_reference(dec, model.driver, h_p, sector=reference_sector, level=reference_level)

    sector = dec.sector_for(ground_sector_q)
    driver_system = diagonalize_sector(model.driver, sector, label="driver")
    problem_system = diagonalize_sector(h_p, sector, label="problem")
    initial = prepare_initial(driver_system, reference, relative_phase, level)
    logger.info(
        f"Plan: sector q' = {sector.q_value} (dim {sector.dim}), driver level {level}, "
        f"reference q = {reference.q}, T = {T}, tau in [{tau_grid.tau_min}, {tau_grid.tau_max}], L = {tau_grid.L}"
    )
    return RamseyPlan(
        model=model,
        ground_sector_q=sector.q_value,
        reference=reference,
        T=float(T),
        tau_grid=tau_grid,
        prop=prop or PropagationSettings(),
        driver_system=driver_system,
        problem_system=problem_system,
        initial=initial,
        shots=shots,
        seed=seed,
        level=level,
        relative_phase=relative_phase,
        cache_asp=cache_asp,
    )


def run_once(plan: RamseyPlan, tau: float, system: Optional[DrivenSystem] = None) -> float:
    """ASP, hold for tau, reverse ASP, then project onto the initial state"""
    started = time.perf_counter()
    system = system or DrivenSystem(plan.model.driver, plan.problem, plan.prop)
    schedule = Schedule(plan.T, tau)
    final = system.propagate(schedule, 0.0, schedule.end, plan.initial)
    probability = float(np.clip(abs(final.overlap(plan.initial)) ** 2, 0.0, 1.0))
    metrics.run_once_seconds.observe(time.perf_counter() - started)
    return probability


class CachedRamsey:
    """P(tau) from ramp propagators built once

    The forward ramp ends in the same state for every tau and the reverse ramp is
    the same unitary shifted in time, so only the hold phase depends on tau.
    """

    def __init__(self, plan: RamseyPlan, system: Optional[DrivenSystem] = None):
        system = system or DrivenSystem(plan.model.driver, plan.problem, plan.prop)
        ramps = Schedule(plan.T, 0.0)
        forward = system.propagator(ramps, 0.0, plan.T)
        reverse = system.propagator(ramps, plan.T, 2 * plan.T)
        hold = StaticEvolver.for_matrix(materialize(plan.problem))
        psi = plan.initial.amplitudes
        self.energies = hold.energies
        self.after_forward = hold.vectors.conj().T @ (forward @ psi)
        self.before_reverse = hold.vectors.conj().T @ (reverse.conj().T @ psi)

    def amplitudes(self, taus: Sequence[float]) -> np.ndarray:
        phases = np.exp(-1j * np.outer(np.asarray(taus, dtype=float), self.energies))
        return phases @ (self.before_reverse.conj() * self.after_forward)

    def probabilities(self, taus: Sequence[float]) -> np.ndarray:
        return np.clip(np.abs(self.amplitudes(taus)) ** 2, 0.0, 1.0)


def _sample(probabilities: np.ndarray, shots: int, seed: int) -> np.ndarray:
    children = np.random.SeedSequence(seed).spawn(len(probabilities))
    counts = [np.random.default_rng(child).binomial(shots, p) for child, p in zip(children, probabilities)]
    return np.asarray(counts, dtype=float) / shots


def sweep(plan: RamseyPlan, max_workers: Optional[int] = None) -> RamseySeries:
    taus = plan.tau_grid.values
    system = DrivenSystem(plan.model.driver, plan.problem, plan.prop)
    if plan.cache_asp:
        probabilities = CachedRamsey(plan, system).probabilities(taus)
    else:
        probabilities = np.asarray(
            evaluate_grid(lambda tau: run_once(plan, tau, system), list(taus), max_workers, label="tau")
        )
    metrics.ramsey_points.labels(mode="exact").inc(len(taus))

    if plan.shots is None:
        return RamseySeries(plan=plan, taus=taus, probabilities=probabilities, mode="exact")
    sampled = _sample(probabilities, plan.shots, plan.seed)
    metrics.ramsey_points.labels(mode="sampled").inc(len(taus))
    logger.info(f"Sampled {plan.shots} shots per point with seed {plan.seed}")
    return RamseySeries(plan=plan, taus=taus, probabilities=sampled, mode="sampled")


def ideal_probability(plan: RamseyPlan, tau: float) -> float:
    """Adiabatic-limit prediction with the ramp phases dropped"""
    gap = plan.problem_system.energies[plan.level] - plan.reference_energy
    return float(np.cos(0.5 * gap * tau + 0.5 * plan.relative_phase) ** 2)


def _driver_ground(model: ModelConfig, sector_q: Optional[float]) -> StateVector:
    dec = decompose(model.conserved)
    sectors = [dec.sector_for(sector_q)] if sector_q is not None else list(dec.sectors)
    best: Optional[Tuple[float, StateVector]] = None
    for sector in sectors:
        system = diagonalize_sector(model.driver, sector, label="driver")
        if best is None or system.energies[0] < best[0] - settings.residual_tolerance:
            best = (float(system.energies[0]), system.state(0))
    return best[1]


def conventional_estimate(
    model: ModelConfig,
    T_conv: float,
    prop: Optional[PropagationSettings] = None,
    sector: Optional[float] = None,
) -> float:
    """<H_P> after a single linear ramp from the driver ground state"""
    psi = _driver_ground(model, sector)
    h_p = apply_penalty(model)
    final = DrivenSystem(model.driver, h_p, prop).propagate(RampSchedule(T_conv), 0.0, T_conv, psi)
    return expectation(model.problem, final)


def adiabatic_criterion(
    model: ModelConfig, s_grid_size: int = 201, sector: Optional[float] = None
) -> float:
    """max over s and excited n of |<n|dH/ds|g>| / (E_n - E_g)^2 for H(s) = (1-s) H_D + s H_P"""
    if s_grid_size < 2:
        raise ConfigError(f"s grid needs at least 2 points, got {s_grid_size}")
    h_p = apply_penalty(model)
    if sector is not None:
        block = decompose(model.conserved).sector_for(sector)
        driver, problem = sector_block(model.driver, block), sector_block(h_p, block)
    else:
        driver, problem = materialize(model.driver), materialize(h_p)
    derivative = problem - driver

    worst = 0.0
    for s in np.linspace(0.0, 1.0, s_grid_size):
        energies, vectors = np.linalg.eigh((1.0 - s) * driver + s * problem)
        couplings = np.abs(vectors.conj().T @ (derivative @ vectors[:, 0]))
        for n in range(1, len(energies)):
            if couplings[n] <= 1e-12:
                continue
            gap = energies[n] - energies[0]
            if abs(gap) < 1e-10:
                logger.warning(f"Degenerate coupled levels at s = {s:.4f}; criterion is unbounded")
                return math.inf
            worst = max(worst, couplings[n] / gap ** 2)
    return float(worst)


# ---- initial-state preparation through a GHZ register ----

@dataclass(frozen=True)
class StageDiagnostic:
    stage: int
    description: str
    duration: float
    norm: float
    parity_x: Optional[float] = None


@dataclass(frozen=True, eq=False)
class GhzPreparation:
    state: StateVector
    register: Tuple[int, ...]
    pattern_ground: str
    pattern_reference: str
    stages: Tuple[StageDiagnostic, ...]
    population_ground: float
    population_reference: float

    @property
    def leakage(self) -> float:
        return max(0.0, 1.0 - self.population_ground - self.population_reference)


def _longitudinal_fields(driver: HamiltonianSpec) -> np.ndarray:
    fields = np.zeros(driver.n_qubits)
    for coeff, string in driver.terms:
        sites = [i for i, f in enumerate(string.factors) if f != "I"]
        if len(sites) == 1 and string.factors[sites[0]] == "Z":
            fields[sites[0]] += coeff
    return fields


def derive_transverse_pattern(driver: HamiltonianSpec, state: StateVector) -> str:
    """sigma^x signs of the transverse product state that ramps into the given basis state

    A qubit whose spin is aligned with its field (B_i z_i < 0) maps to the transverse
    ground sign -sign(B_i); an anti-aligned qubit maps to the opposite sign.
    """
    weights = np.abs(state.amplitudes) ** 2
    index = int(np.argmax(weights))
    if weights[index] < 1.0 - settings.residual_tolerance:
        raise ConfigError("state is not a computational basis state; pass the transverse pattern explicitly")
    bits = basis_label(index, state.n_qubits)
    fields = _longitudinal_fields(driver)
    pattern = []
    for i, bit in enumerate(bits):
        if fields[i] == 0:
            raise ConfigError(f"qubit {i} has no longitudinal field; pass the transverse pattern explicitly")
        z = 1.0 if bit == "1" else -1.0
        ground_sign = "+" if fields[i] < 0 else "-"
        aligned = fields[i] * z < 0
        pattern.append(ground_sign if aligned else ("-" if ground_sign == "+" else "+"))
    return "".join(pattern)


def _check_pattern(pattern: str, n_qubits: int, name: str) -> None:
    if len(pattern) != n_qubits or set(pattern) - set("+-"):
        raise ConfigError(f"{name} '{pattern}' must be {n_qubits} characters over '+' and '-'")


def prepare_ghz_register(
    k: int,
    durations: Tuple[float, float],
    B_register: Optional[Sequence[float]] = None,
    B1: float = 1.0,
    B2: float = 1.0,
    B3: float = 1.0,
    prop: Optional[PropagationSettings] = None,
) -> Tuple[StateVector, List[StageDiagnostic]]:
    """Ground of B1 sum X -> GHZ -> (|+..+> + |-..->)/sqrt 2 on a k-qubit register"""
    if any(d <= 0 for d in durations):
        raise ConfigError(f"stage durations must be positive, got {durations}")
    h1, h2, h3, h4, _ = build_ghz_hamiltonians(k, B1, B2, B3, B_register)
    parity = build_parity_x(k)

    psi = StateVector.product(("-" if B1 > 0 else "+") * k)
    stages = []
    for stage, (h_from, h_to, duration, what) in enumerate(
        [(h1, h2, durations[0], "transverse field to (sum Z)^2"), (h2, h3, durations[1], "(sum Z)^2 to (sum X)^2")],
        start=1,
    ):
        psi = interpolate(h_from, h_to, duration, psi, prop)
        stages.append(
            StageDiagnostic(stage, what, duration, float(np.linalg.norm(psi.amplitudes)), expectation(parity, psi))
        )
        logger.debug(f"GHZ stage {stage} done, parity {stages[-1].parity_x:.9f}")

    norm = commutator_norm(h3, h4)
    if norm > 1e-12:
        raise PhysicsError(f"stage-3 switch requires commuting Hamiltonians; commutator norm is {norm:.3e}")
    stages.append(StageDiagnostic(3, "switch to sum B_i X_i", 0.0, float(np.linalg.norm(psi.amplitudes)),
                                  expectation(parity, psi)))
    return psi, stages


def _extend_register(register_state: StateVector, register: Sequence[int], pattern: str) -> StateVector:
    """Embed the register state and put every other qubit in its |+> or |-> state"""
    n = len(pattern)
    single = {"+": np.array([1.0, 1.0]) / math.sqrt(2.0), "-": np.array([-1.0, 1.0]) / math.sqrt(2.0)}
    indices = np.arange(2 ** n)
    local = np.zeros(indices.size, dtype=int)
    for j, site in enumerate(register):
        local |= ((indices >> site) & 1) << j
    amps = register_state.amplitudes[local].astype(complex)
    for site in range(n):
        if site not in register:
            amps = amps * single[pattern[site]][(indices >> site) & 1]
    return StateVector.from_amplitudes(amps, n)


def prepare_ghz_pipeline(
    model: ModelConfig,
    stage_durations: Tuple[float, float, float] = (50.0, 50.0, 50.0),
    pattern_ground: Optional[str] = None,
    pattern_reference: Optional[str] = None,
    ground_sector: float = 0.0,
    level: int = 0,
    B1: float = 1.0,
    B2: float = 1.0,
    B3: float = 1.0,
    prop: Optional[PropagationSettings] = None,
    leakage_threshold: Optional[float] = None,
) -> GhzPreparation:
    """Prepare (|driver level> + |reference>)/sqrt 2 without knowing the ramps' phases

    GHZ register on the qubits where the two transverse patterns differ, common
    qubits appended in product form, then a ramp from sum B_i X_i to the driver.
    """
    n = model.n_qubits
    if n % 2:
        raise ConfigError(f"GHZ preparation needs an even number of qubits, got {n}")
    h_p = apply_penalty(model)
    dec = decompose(model.conserved)
    reference = select_reference(dec, model.driver, h_p, sector=model.reference_sector,
                                 level=model.reference_level)
    driver_system = diagonalize_sector(model.driver, dec.sector_for(ground_sector), label="driver")
    target_ground = driver_system.state(level)

    pattern_ground = pattern_ground or derive_transverse_pattern(model.driver, target_ground)
    pattern_reference = pattern_reference or derive_transverse_pattern(model.driver, reference.state)
    _check_pattern(pattern_ground, n, "pattern_ground")
    _check_pattern(pattern_reference, n, "pattern_reference")
    register = tuple(i for i in range(n) if pattern_ground[i] != pattern_reference[i])
    if not register or len(register) % 2:
        raise ConfigError(
            f"patterns must differ on a nonempty, even set of qubits; they differ on {list(register)}"
        )

    fields = _longitudinal_fields(model.driver)
    transverse = build_ghz_hamiltonians(n, B1, B2, B3, fields if fields.any() else None)[4]
    psi, stages = prepare_ghz_register(
        len(register), stage_durations[:2], [fields[i] or 1.0 for i in register], B1, B2, B3, prop
    )

    # Z swaps |+> and |->, sending |+..+> to the ground pattern on the register
    flips = [j for j, site in enumerate(register) if pattern_ground[site] == "-"]
    phases = np.ones(psi.dim)
    indices = np.arange(psi.dim)
    for j in flips:
        phases *= np.where((indices >> j) & 1, 1.0, -1.0)
    psi = StateVector(psi.n_qubits, phases * psi.amplitudes)
    psi = _extend_register(psi, register, pattern_ground)
    stages.append(StageDiagnostic(4, "extend register with product qubits", 0.0, float(np.linalg.norm(psi.amplitudes))))

    psi = interpolate(transverse, model.driver, stage_durations[2], psi, prop)
    stages.append(StageDiagnostic(5, "sum B_i X_i to driver", stage_durations[2], float(np.linalg.norm(psi.amplitudes))))

    result = GhzPreparation(
        state=psi,
        register=register,
        pattern_ground=pattern_ground,
        pattern_reference=pattern_reference,
        stages=tuple(stages),
        population_ground=psi.fidelity(target_ground),
        population_reference=psi.fidelity(reference.state),
    )
    threshold = settings.leakage_threshold if leakage_threshold is None else leakage_threshold
    logger.info(
        f"GHZ preparation: populations {result.population_ground:.6f} / {result.population_reference:.6f}, "
        f"leakage {result.leakage:.3e}"
    )
    if result.leakage > threshold:
        raise PhysicsError(f"preparation leakage {result.leakage:.3e} exceeds threshold {threshold}")
    return result
