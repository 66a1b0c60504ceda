import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import PhysicsError
from app.services.operators import HamiltonianSpec, materialize
from app.services.symmetry import decompose, diagonalize_sector

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FullSpectrum:
    energies: np.ndarray
    states: np.ndarray  # eigenvectors as columns

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def width(self) -> float:
        return float(self.energies[-1] - self.energies[0])


@dataclass(frozen=True)
class SectorLevel:
    level: int
    energy: float
    q: float
    sector_level: int


class ExactOracle:
    """Dense diagonalization used as ground truth"""

    def exact_diagonalize(self, h: HamiltonianSpec) -> FullSpectrum:
        matrix = materialize(h)
        energies, states = np.linalg.eigh(matrix)
        residual = np.linalg.norm(matrix @ states - states * energies, axis=0)
        if residual.max() > settings.residual_tolerance:
            raise PhysicsError(f"eigen-residual {residual.max():.3e} exceeds {settings.residual_tolerance}")
        logger.debug(f"Diagonalized {matrix.shape[0]}x{matrix.shape[0]} matrix, ground {energies[0]:.10f}")
        return FullSpectrum(energies=energies, states=states)

    def gap_table(
        self,
        spectrum: FullSpectrum,
        ref_energy: float,
        level_shifts: Optional[Sequence[float]] = None,
    ) -> List[Tuple[int, float]]:
        """(level, ref_energy - (E_level - shift_level)), largest gap first

        level_shifts maps problem energies back into the frame the reference was measured in.
        """
        shifts = np.zeros(spectrum.energies.size) if level_shifts is None else np.asarray(level_shifts, float)
        if shifts.size != spectrum.energies.size:
            raise PhysicsError(f"{shifts.size} level shifts for {spectrum.energies.size} levels")
        gaps = [
            (level, float(ref_energy - (e - s))) for level, (e, s) in enumerate(zip(spectrum.energies, shifts))
        ]
        return sorted(gaps, key=lambda item: (-item[1], item[0]))

    def sector_resolved_levels(self, h: HamiltonianSpec, q_op: HamiltonianSpec) -> List[SectorLevel]:
        rows = []
        for sector in decompose(q_op).sectors:
            system = diagonalize_sector(h, sector)
            rows.extend((float(e), sector.q_value, n) for n, e in enumerate(system.energies))
        rows.sort(key=lambda row: (row[0], row[1]))
        return [SectorLevel(level=k, energy=e, q=q, sector_level=n) for k, (e, q, n) in enumerate(rows)]

    def level_index(self, spectrum: FullSpectrum, energy: float) -> int:
        return int(np.argmin(np.abs(spectrum.energies - energy)))


exact_oracle = ExactOracle()
