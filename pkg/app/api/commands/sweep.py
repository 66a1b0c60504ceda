import logging
from pathlib import Path
from typing import List

from app.api.commands import add_common_arguments
from app.api.dependencies import get_model, get_oracle_levels, get_plan, peak_records, report_record, run_meta
from app.api.schemas import ExperimentConfig, PeaksDocument
from app.core.exceptions import CapExceededError, ConfigError
from app.db.result_store import ResultStore
from app.services.protocol import adiabatic_criterion, sweep
from app.services.spectral import MIN_SAMPLES, Spectrum, spectral_analyzer

logger = logging.getLogger(__name__)


def write_spectrum(store: ResultStore, name: str, spectrum: Spectrum) -> Path:
    rows = [
        (float(w), float(v.real), float(v.imag), float(abs(v)))
        for w, v in zip(spectrum.omega_grid, spectrum.values)
    ]
    return store.write_csv(name, ["omega", "re", "im", "abs"], rows)


def cmd_sweep(config: ExperimentConfig) -> List[Path]:
    """Ramsey sweep, spectrum, peaks and reconstructed energies for one sector"""
    if config.L < MIN_SAMPLES:
        raise ConfigError(f"insufficient samples for a spectrum: L = {config.L} < {MIN_SAMPLES}")
    model = get_model(config)
    plan = get_plan(config, model)
    series = sweep(plan, max_workers=config.threads)
    oracle_levels = get_oracle_levels(model)
    spectrum, peaks, report = spectral_analyzer.analyze(
        series,
        oracle_levels=oracle_levels,
        omega_max=config.omega_max,
        oversample=config.oversample,
        window=config.window.value,
        refine=config.refine.value,
    )

    notes = []
    try:
        criterion = adiabatic_criterion(model, sector=plan.ground_sector_q)
        notes.append(f"adiabatic criterion in sector {plan.ground_sector_q}: {criterion!r}")
    except CapExceededError:
        logger.info("Sector too large for the adiabatic criterion")

    store = ResultStore(config.out_dir)
    ramsey_rows = [(n + 1, float(tau), float(p)) for n, (tau, p) in enumerate(zip(series.taus, series.probabilities))]
    written = [
        store.write_csv("ramsey.csv", ["n", "tau", "probability"], ramsey_rows),
        write_spectrum(store, "spectrum.csv", spectrum),
        store.write_json("peaks.json", PeaksDocument(peaks=peak_records(peaks), sector=plan.ground_sector_q)),
        store.write_json("energies.json", report_record(report)),
        store.write_json(
            "run_meta.json",
            run_meta("sweep", config, model, plan.reference, plan.ground_sector_q, notes),
        ),
    ]
    ground = report.ground_estimate
    logger.info(f"Ground-state estimate {ground.energy:.9f} (E_ref {report.reference_energy:.9f})")
    return written


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="tau sweep and energy reconstruction in one sector")
    add_common_arguments(parser)
    parser.set_defaults(handler=cmd_sweep)
