import logging
from pathlib import Path
from typing import List

from app.api.commands import add_common_arguments, float_list
from app.api.commands.sweep import write_spectrum
from app.api.dependencies import get_model, get_propagation_settings, get_tau_grid, peak_records, report_record, run_meta
from app.api.schemas import ExperimentConfig, GlobalMinimumRecord, PeaksDocument, SectorResultRecord
from app.db.result_store import ResultStore
from app.services.spectral import spectral_analyzer

logger = logging.getLogger(__name__)


def sector_tag(q: float) -> str:
    return f"{q:+g}".replace("+", "p").replace("-", "m")


def cmd_scan(config: ExperimentConfig) -> List[Path]:
    """Run the protocol in every requested sector and report the lowest energy found"""
    model = get_model(config)
    result = spectral_analyzer.scan_subspaces(
        model,
        config.sectors or None,
        config.T,
        get_tau_grid(config),
        prop=get_propagation_settings(config),
        max_workers=config.threads,
        omega_max=config.omega_max,
        oversample=config.oversample,
        window=config.window.value,
        refine=config.refine.value,
    )

    store = ResultStore(config.out_dir)
    written = []
    records = []
    for entry in result.sectors:
        records.append(
            SectorResultRecord(
                sector=entry.sector,
                status=entry.status,
                report=report_record(entry.report) if entry.report is not None else None,
                classical_energy=entry.classical_energy,
                error=entry.error,
            )
        )
        if entry.spectrum is not None:
            tag = sector_tag(entry.sector)
            written.append(write_spectrum(store, f"spectrum_q{tag}.csv", entry.spectrum))
            written.append(
                store.write_json(f"peaks_q{tag}.json", PeaksDocument(peaks=peak_records(list(entry.peaks)), sector=entry.sector))
            )

    written.append(
        store.write_json(
            "global_minimum.json",
            GlobalMinimumRecord(sector=result.global_sector, energy=result.global_energy, sectors=records),
        )
    )
    written.append(store.write_json("run_meta.json", run_meta("scan", config, model)))
    return written


def register(subparsers) -> None:
    parser = subparsers.add_parser("scan", help="protocol in every sector and global minimum")
    add_common_arguments(parser)
    parser.add_argument("--sectors", type=float_list, help="comma-separated sector values (default: all)")
    parser.set_defaults(handler=cmd_scan)
