import logging
from pathlib import Path
from typing import List

from app.api.commands import add_common_arguments, float_list
from app.api.dependencies import get_model, get_propagation_settings, run_meta
from app.api.schemas import ExperimentConfig, PrepDiagnosticsRecord, StageRecord
from app.db.result_store import ResultStore
from app.services.protocol import prepare_ghz_pipeline

logger = logging.getLogger(__name__)


def cmd_prep_ghz(config: ExperimentConfig) -> List[Path]:
    """Initial-state preparation through a GHZ register, with per-stage diagnostics"""
    model = get_model(config)
    result = prepare_ghz_pipeline(
        model,
        stage_durations=config.stage_durations,
        pattern_ground=config.pattern_ground,
        pattern_reference=config.pattern_reference,
        ground_sector=config.sector,
        level=config.level,
        prop=get_propagation_settings(config),
    )
    record = PrepDiagnosticsRecord(
        n_qubits=model.n_qubits,
        register=list(result.register),
        pattern_ground=result.pattern_ground,
        pattern_reference=result.pattern_reference,
        stages=[
            StageRecord(stage=s.stage, description=s.description, duration=s.duration, norm=s.norm, parity_x=s.parity_x)
            for s in result.stages
        ],
        population_ground=result.population_ground,
        population_reference=result.population_reference,
        leakage=result.leakage,
    )
    store = ResultStore(config.out_dir)
    return [
        store.write_json("prep_diag.json", record),
        store.write_json("run_meta.json", run_meta("prep-ghz", config, model, ground_sector=config.sector)),
    ]


def register(subparsers) -> None:
    parser = subparsers.add_parser("prep-ghz", help="GHZ-based preparation of the initial superposition")
    add_common_arguments(parser)
    parser.add_argument("--pattern-ground", help="transverse signs (+/-) of the ground branch")
    parser.add_argument("--pattern-reference", help="transverse signs (+/-) of the reference branch")
    parser.add_argument("--stage-durations", type=float_list, help="durations of stages 1, 2 and 5")
    parser.set_defaults(handler=cmd_prep_ghz)
