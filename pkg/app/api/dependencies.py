import logging
from importlib import metadata
from typing import Dict, List, Optional

import numpy as np
import scipy

from app import __version__
from app.api.schemas import (
    EnergyEstimateRecord,
    EnergyReportRecord,
    ExperimentConfig,
    PeakRecord,
    ReferenceRecord,
    RunMeta,
)
from app.core.config import settings
from app.core.exceptions import CapExceededError
from app.services.evolution import PropagationSettings
from app.services.models import ModelConfig, load_model_file
from app.services.oracle import exact_oracle
from app.services.protocol import RamseyPlan, TauGrid, build_plan
from app.services.spectral import EnergyReport, PeakEstimate
from app.services.symmetry import ReferenceState

logger = logging.getLogger(__name__)

# settings that do not change numerical results
RUN_SETTINGS_EXCLUDED = {"log_level", "metrics_enabled", "max_workers"}


def get_model(config: ExperimentConfig) -> ModelConfig:
    return load_model_file(config.model_path)


def get_propagation_settings(config: ExperimentConfig) -> PropagationSettings:
    return PropagationSettings(
        steps_per_unit_time=config.steps_per_unit,
        method=config.method.value,
        norm_tolerance=settings.norm_tolerance,
    )


def get_tau_grid(config: ExperimentConfig, tau_max: Optional[float] = None) -> TauGrid:
    return TauGrid(config.tau_min, config.tau_max if tau_max is None else tau_max, config.L)


def get_plan(config: ExperimentConfig, model: ModelConfig, tau_grid: Optional[TauGrid] = None) -> RamseyPlan:
    return build_plan(
        model,
        ground_sector_q=config.sector,
        T=config.T,
        tau_grid=tau_grid or get_tau_grid(config),
        prop=get_propagation_settings(config),
        shots=config.shots,
        seed=config.seed,
        level=config.level,
        relative_phase=config.relative_phase,
        cache_asp=config.cache_asp,
        reference_sector=config.reference_sector,
        reference_level=config.reference_level,
    )


def get_oracle_levels(model: ModelConfig) -> Optional[np.ndarray]:
    """Full problem spectrum, without the penalty, when it fits under the dense cap"""
    try:
        return exact_oracle.exact_diagonalize(model.problem).energies
    except CapExceededError:
        logger.info("Problem too large for the dense oracle; reports carry no level matching")
        return None


def get_versions() -> Dict[str, str]:
    versions = {"app": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    for package in ("pydantic", "pydantic-settings", "prometheus-client"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def reference_record(reference: ReferenceState) -> ReferenceRecord:
    return ReferenceRecord(
        sector=reference.q,
        level=reference.level,
        energy_problem=reference.energy_problem,
        energy_driver=reference.energy_driver,
    )


def peak_records(peaks: List[PeakEstimate]) -> List[PeakRecord]:
    return [
        PeakRecord(
            omega_raw=p.omega_raw,
            omega_refined=p.omega_refined,
            magnitude=p.magnitude,
            refinement=p.refinement,
            uncertainty=p.uncertainty,
        )
        for p in peaks
    ]


def report_record(report: EnergyReport) -> EnergyReportRecord:
    return EnergyReportRecord(
        reference_energy=report.reference_energy,
        sector=report.sector,
        penalty_shift=report.penalty_shift,
        estimates=[
            EnergyEstimateRecord(
                omega_refined=e.omega_refined,
                energy=e.energy,
                matched_level=e.matched_level,
                matched_energy=e.matched_energy,
                relative_error=e.relative_error,
                label=e.label,
            )
            for e in report.estimates
        ],
    )


def run_meta(
    command: str,
    config: ExperimentConfig,
    model: ModelConfig,
    reference: Optional[ReferenceState] = None,
    ground_sector: Optional[float] = None,
    notes: Optional[List[str]] = None,
) -> RunMeta:
    return RunMeta(
        command=command,
        model_label=model.label,
        model_source=model.provenance.get("source"),
        n_qubits=model.n_qubits,
        config=config,
        reference=reference_record(reference) if reference is not None else None,
        ground_sector=ground_sector,
        mode="sampled" if config.shots else "exact",
        seed=config.seed,
        versions=get_versions(),
        settings=settings.model_dump(exclude=RUN_SETTINGS_EXCLUDED),
        notes=notes or [],
    )
