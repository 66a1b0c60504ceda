"""Sector decomposition by a diagonal conserved quantity and reference-state selection."""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core import metrics
from app.core.config import settings
from app.core.exceptions import CapExceededError, ConfigError, PhysicsError
from app.services.operators import HamiltonianSpec, StateVector, diagonal, to_sparse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sector:
    q_value: float
    basis_indices: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.basis_indices)


@dataclass(frozen=True)
class SectorDecomposition:
    q_op: HamiltonianSpec
    sectors: Tuple[Sector, ...]

    @property
    def n_qubits(self) -> int:
        return self.q_op.n_qubits

    @property
    def q_values(self) -> List[float]:
        return [s.q_value for s in self.sectors]

    def sector_for(self, q: float) -> Sector:
        for sector in self.sectors:
            if abs(sector.q_value - q) <= settings.grouping_tolerance:
                return sector
        raise ConfigError(f"no sector with q = {q}; available: {self.q_values}")

    def sector_of(self, state: StateVector) -> float:
        """Eigenvalue of the sector carrying the state; rejects states spread over sectors"""
        for sector in self.sectors:
            weight = state.weight_on(sector.basis_indices)
            if abs(weight - 1.0) <= settings.residual_tolerance:
                return sector.q_value
        raise PhysicsError("state is not confined to a single sector")


@dataclass(frozen=True, eq=False)
class SectorEigensystem:
    sector: Sector
    hamiltonian_label: str
    energies: np.ndarray
    vectors: np.ndarray  # sector-local eigenvectors as columns
    n_qubits: int

    @property
    def states(self) -> List[StateVector]:
        return [self.state(n) for n in range(self.sector.dim)]

    def state(self, level: int) -> StateVector:
        if not 0 <= level < self.sector.dim:
            raise ConfigError(
                f"level {level} out of range for sector q = {self.sector.q_value} (dim {self.sector.dim})"
            )
        amps = np.zeros(2 ** self.n_qubits, dtype=complex)
        amps[list(self.sector.basis_indices)] = self.vectors[:, level]
        return StateVector(self.n_qubits, amps)


@dataclass(frozen=True)
class ReferenceState:
    q: float
    level: int
    state: StateVector
    energy_driver: float
    energy_problem: float


def decompose(q_op: HamiltonianSpec, n_qubits: Optional[int] = None) -> SectorDecomposition:
    if n_qubits is not None and n_qubits != q_op.n_qubits:
        raise ConfigError(f"conserved quantity acts on {q_op.n_qubits} qubits, expected {n_qubits}")
    if not q_op.is_diagonal:
        raise ConfigError("conserved quantity must be diagonal in the computational basis (I/Z factors only)")

    values = diagonal(q_op)
    order = np.argsort(values, kind="stable")
    groups: List[List[int]] = []
    anchors: List[float] = []
    for index in order:
        value = values[index]
        if groups and abs(value - anchors[-1]) <= settings.grouping_tolerance:
            groups[-1].append(int(index))
        else:
            groups.append([int(index)])
            anchors.append(float(value))

    sectors = tuple(
        Sector(q_value=float(np.round(anchor, 10)) + 0.0, basis_indices=tuple(sorted(group)))
        for anchor, group in zip(anchors, groups)
    )
    logger.debug(f"Decomposed {2 ** q_op.n_qubits} basis states into {len(sectors)} sectors")
    return SectorDecomposition(q_op=q_op, sectors=sectors)


def project(state: StateVector, sector: Sector) -> np.ndarray:
    """Sector-local amplitudes of a state (unnormalized)"""
    return np.asarray(state.amplitudes[list(sector.basis_indices)])


def sector_block(h: HamiltonianSpec, sector: Sector) -> np.ndarray:
    """Dense block of h on the sector; rejects h that couples the sector to its complement"""
    if sector.dim > settings.sector_dense_cap:
        raise CapExceededError(f"sector dim {sector.dim} exceeds the sector cap of {settings.sector_dense_cap}")
    columns = to_sparse(h).tocsc()[:, list(sector.basis_indices)]
    inside = np.zeros(2 ** h.n_qubits, dtype=bool)
    inside[list(sector.basis_indices)] = True
    coo = columns.tocoo()
    leaking = np.abs(coo.data[~inside[coo.row]])
    if leaking.size and leaking.max() > settings.commutation_tolerance:
        raise PhysicsError(
            f"Hamiltonian couples sector q = {sector.q_value} to other sectors "
            f"(largest element {leaking.max():.3e}); it does not commute with the conserved quantity"
        )
    return columns.tocsr()[list(sector.basis_indices), :].toarray()


def _fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Make the largest component of each eigenvector real and positive"""
    fixed = vectors.astype(complex)
    for k in range(fixed.shape[1]):
        magnitude = np.abs(fixed[:, k])
        # first index attaining the maximum, ties within 1e-9
        pivot = int(np.argmax(magnitude > magnitude.max() - 1e-9))
        fixed[:, k] *= np.exp(-1j * np.angle(fixed[pivot, k]))
    return fixed


def _order_degenerate(energies: np.ndarray, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Within degenerate clusters order levels by the lowest supported basis index"""
    support = [int(np.argmax(np.abs(vectors[:, k]) > 1e-8)) for k in range(vectors.shape[1])]
    order = list(range(len(energies)))
    start = 0
    while start < len(energies):
        stop = start + 1
        while stop < len(energies) and energies[stop] - energies[start] <= settings.residual_tolerance:
            stop += 1
        order[start:stop] = sorted(range(start, stop), key=lambda k: support[k])
        start = stop
    return energies[order], vectors[:, order]


def diagonalize_sector(h: HamiltonianSpec, sector: Sector, label: str = "problem") -> SectorEigensystem:
    block = sector_block(h, sector)
    energies, vectors = np.linalg.eigh(block)
    energies, vectors = _order_degenerate(energies, _fix_gauge(vectors))

    residual = np.linalg.norm(block @ vectors - vectors * energies, axis=0)
    if residual.size and residual.max() > settings.residual_tolerance:
        raise PhysicsError(f"sector eigen-residual {residual.max():.3e} exceeds {settings.residual_tolerance}")

    metrics.sector_diagonalizations.labels(hamiltonian=label).inc()
    return SectorEigensystem(
        sector=sector,
        hamiltonian_label=label,
        energies=energies,
        vectors=vectors,
        n_qubits=h.n_qubits,
    )


def full_sector_spectrum(h: HamiltonianSpec, dec: SectorDecomposition) -> np.ndarray:
    """All sector energies concatenated and sorted"""
    energies = [diagonalize_sector(h, sector).energies for sector in dec.sectors]
    return np.sort(np.concatenate(energies))


def _common_basis(problem: SectorEigensystem, driver_block: np.ndarray) -> np.ndarray:
    """Problem eigenvectors, rotated inside each degenerate level to diagonalize the driver"""
    energies = problem.energies
    vectors = problem.vectors.copy()
    start = 0
    while start < energies.size:
        stop = start + 1
        while stop < energies.size and energies[stop] - energies[start] <= settings.residual_tolerance:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            _, rotation = np.linalg.eigh(block.conj().T @ driver_block @ block)
            vectors[:, start:stop] = _fix_gauge(block @ rotation)
        start = stop
    return vectors


def _simultaneous_levels(
    h_d: HamiltonianSpec, h_p: HamiltonianSpec, sector: Sector
) -> List[ReferenceState]:
    """Eigenstates of h_p in the sector that are also eigenstates of h_d"""
    problem = diagonalize_sector(h_p, sector, label="problem")
    driver_block = sector_block(h_d, sector)
    common = replace(problem, vectors=_common_basis(problem, driver_block))
    found = []
    for level in range(sector.dim):
        v = common.vectors[:, level]
        e_d = float(np.real(np.vdot(v, driver_block @ v)))
        if np.linalg.norm(driver_block @ v - e_d * v) <= settings.residual_tolerance:
            found.append(
                ReferenceState(
                    q=sector.q_value,
                    level=level,
                    state=common.state(level),
                    energy_driver=e_d,
                    energy_problem=float(problem.energies[level]),
                )
            )
    return found


def select_reference(
    dec: SectorDecomposition,
    h_d: HamiltonianSpec,
    h_p: HamiltonianSpec,
    sector: Optional[float] = None,
    level: Optional[int] = None,
    exclude: Sequence[float] = (),
) -> ReferenceState:
    """Simultaneous eigenstate of h_d and h_p with the largest problem energy

    Candidate sectors are proper subspaces within the sector cap. An explicit
    (sector, level) override is honoured but still checked.
    """
    full_dim = 2 ** dec.n_qubits
    candidates = [
        s for s in dec.sectors
        if s.dim < full_dim and s.dim <= settings.sector_dense_cap
        and not any(abs(s.q_value - q) <= settings.grouping_tolerance for q in exclude)
    ]
    if sector is not None:
        candidates = [dec.sector_for(sector)]
    if not candidates:
        raise PhysicsError("no classically diagonalizable sector is available for a reference state")

    found: List[ReferenceState] = []
    for candidate in candidates:
        found.extend(_simultaneous_levels(h_d, h_p, candidate))
    if level is not None:
        found = [ref for ref in found if ref.level == level]
    if not found:
        raise PhysicsError(
            "no simultaneous eigenstate of the driver and problem Hamiltonians found; "
            "the conserved quantity does not meet the protocol assumptions"
        )

    reference = max(found, key=lambda ref: ref.energy_problem)
    global_max = _global_problem_max(dec, h_p)
    if global_max is not None and reference.energy_problem < global_max - settings.residual_tolerance:
        logger.warning(
            f"Reference energy {reference.energy_problem:.6f} is below the problem maximum "
            f"{global_max:.6f}; reconstructed energies may alias. Consider build_penalty"
        )
    logger.info(
        f"Reference state: sector q = {reference.q}, level {reference.level}, "
        f"E_ref = {reference.energy_problem:.10f}"
    )
    return reference


def _global_problem_max(dec: SectorDecomposition, h_p: HamiltonianSpec) -> Optional[float]:
    tops = []
    for sector in dec.sectors:
        if sector.dim > settings.sector_dense_cap:
            logger.debug(f"Sector q = {sector.q_value} too large to bound the problem maximum")
            return None
        tops.append(float(np.linalg.eigvalsh(sector_block(h_p, sector))[-1]))
    return max(tops)
