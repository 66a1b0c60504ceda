import logging
from pathlib import Path
from typing import List

import numpy as np

from app.api.commands import add_common_arguments
from app.api.dependencies import get_model, run_meta
from app.api.schemas import ExperimentConfig
from app.core.exceptions import PhysicsError
from app.db.result_store import ResultStore
from app.services.models import apply_penalty, penalty_shift
from app.services.oracle import exact_oracle
from app.services.symmetry import decompose, full_sector_spectrum, select_reference

logger = logging.getLogger(__name__)


def cmd_oracle(config: ExperimentConfig) -> List[Path]:
    """Exact spectrum, gaps to the reference energy and the sector-resolved level table

    Energies are those of the problem Hamiltonian; gaps are the frequencies the
    protocol measures, so they carry each sector's penalty offset.
    """
    model = get_model(config)
    h_p = apply_penalty(model)
    dec = decompose(model.conserved)
    spectrum = exact_oracle.exact_diagonalize(model.problem)
    by_sector = full_sector_spectrum(model.problem, dec)
    mismatch = float(np.max(np.abs(by_sector - spectrum.energies)))
    if mismatch > 1e-8:
        raise PhysicsError(f"sector spectra differ from the full spectrum by {mismatch:.3e}")

    reference = select_reference(
        dec,
        model.driver,
        h_p,
        sector=config.reference_sector if config.reference_sector is not None else model.reference_sector,
        level=config.reference_level if config.reference_level is not None else model.reference_level,
    )
    levels = exact_oracle.sector_resolved_levels(model.problem, model.conserved)
    gaps = exact_oracle.gap_table(
        spectrum, reference.energy_problem, level_shifts=[penalty_shift(model, row.q) for row in levels]
    )
    reference_level = exact_oracle.level_index(
        spectrum, reference.energy_problem + penalty_shift(model, reference.q)
    )
    logger.info(f"Reference is level {reference_level} of the problem spectrum")

    store = ResultStore(config.out_dir)
    return [
        store.write_csv("spectrum_exact.csv", ["level", "energy"],
                        [(n, float(e)) for n, e in enumerate(spectrum.energies)]),
        store.write_csv("gaps.csv", ["level", "gap"], gaps),
        store.write_csv("sectors.csv", ["level", "energy", "q", "sector_level"],
                        [(row.level, row.energy, row.q, row.sector_level) for row in levels]),
        store.write_json(
            "run_meta.json",
            run_meta("oracle", config, model, reference,
                     notes=[f"reference is level {reference_level} of the problem spectrum"]),
        ),
    ]


def register(subparsers) -> None:
    parser = subparsers.add_parser("oracle", help="exact diagonalization tables")
    add_common_arguments(parser)
    parser.set_defaults(handler=cmd_oracle)
