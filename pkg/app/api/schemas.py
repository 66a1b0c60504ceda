from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings


class PropagationMethod(str, Enum):
    magnus4 = "magnus4"
    midpoint = "midpoint"
    rk4 = "rk4"


class WindowKind(str, Enum):
    none = "none"
    hann = "hann"


class RefinementMethod(str, Enum):
    quadratic = "quadratic"
    lsq = "lsq"


class SeriesMode(str, Enum):
    exact = "exact"
    sampled = "sampled"


# ---- model file ----

class BuiltinBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    builtin: Literal["heisenberg", "xy_driver", "total_magnetization"]
    params: Dict[str, Any] = Field(default_factory=dict)


class TermsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    terms: List[Tuple[float, str]]


class PenaltyBlock(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lam: float = Field(alias="lambda", gt=0)
    q: float


class ReferenceBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sector: Optional[float] = None
    level: Optional[int] = Field(default=None, ge=0)


class ModelFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_qubits: int = Field(gt=0, le=30)
    label: Optional[str] = None
    problem: Union[BuiltinBlock, TermsBlock]
    driver: Union[BuiltinBlock, TermsBlock]
    conserved: Union[BuiltinBlock, TermsBlock]
    penalty: Optional[PenaltyBlock] = None
    reference: Optional[ReferenceBlock] = None


# ---- experiment configuration ----

class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model_path: str
    out_dir: str = "results"
    T: float = Field(default=5.0, gt=0)
    tau_min: float = Field(default=0.0, ge=0)
    tau_max: float = Field(default=70.0, gt=0)
    L: int = Field(default=1000, ge=2)
    sector: float = 0.0
    level: int = Field(default=0, ge=0)
    relative_phase: float = 0.0
    reference_sector: Optional[float] = None
    reference_level: Optional[int] = Field(default=None, ge=0)
    omega_max: Optional[float] = Field(default=None, gt=0)
    oversample: int = Field(default_factory=lambda: settings.omega_oversample, ge=1)
    window: WindowKind = WindowKind.none
    refine: RefinementMethod = RefinementMethod.lsq
    shots: Optional[int] = Field(default=None, gt=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: int = Field(default_factory=lambda: settings.max_workers, ge=1)
    method: PropagationMethod = Field(default_factory=lambda: PropagationMethod(settings.propagation_method))
    steps_per_unit: int = Field(default_factory=lambda: settings.steps_per_unit_time, gt=0)
    cache_asp: bool = True
    runtimes: List[float] = Field(default_factory=list)
    sectors: List[float] = Field(default_factory=list)
    pattern_ground: Optional[str] = None
    pattern_reference: Optional[str] = None
    stage_durations: Tuple[float, float, float] = (50.0, 50.0, 50.0)

    @model_validator(mode="after")
    def check_tau_range(self):
        if self.tau_min >= self.tau_max:
            raise ValueError(f"tau_min ({self.tau_min}) must be below tau_max ({self.tau_max})")
        return self

    @field_validator("stage_durations")
    @classmethod
    def check_durations(cls, v):
        if any(d <= 0 for d in v):
            raise ValueError(f"stage durations must be positive, got {v}")
        return v


# ---- reports ----

class PeakRecord(BaseModel):
    omega_raw: float
    omega_refined: float
    magnitude: float
    refinement: RefinementMethod
    uncertainty: float


class EnergyEstimateRecord(BaseModel):
    omega_refined: float
    energy: float
    matched_level: Optional[int] = None
    matched_energy: Optional[float] = None
    relative_error: Optional[float] = None
    label: str = "matched"


class EnergyReportRecord(BaseModel):
    reference_energy: float
    estimates: List[EnergyEstimateRecord]
    sector: Optional[float] = None
    penalty_shift: float = 0.0


class ReferenceRecord(BaseModel):
    sector: float
    level: int
    energy_problem: float
    energy_driver: float


class RunMeta(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    command: str
    model_label: str
    model_source: Optional[str] = None
    n_qubits: int
    config: ExperimentConfig
    reference: Optional[ReferenceRecord] = None
    ground_sector: Optional[float] = None
    mode: SeriesMode = SeriesMode.exact
    seed: int
    versions: Dict[str, str]
    settings: Dict[str, Any] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)


class SectorResultRecord(BaseModel):
    sector: float
    status: Literal["ok", "classical", "failed"]
    report: Optional[EnergyReportRecord] = None
    classical_energy: Optional[float] = None
    error: Optional[str] = None


class GlobalMinimumRecord(BaseModel):
    sector: float
    energy: float
    sectors: List[SectorResultRecord]


class StageRecord(BaseModel):
    stage: int
    description: str
    duration: float
    norm: float
    parity_x: Optional[float] = None


class PrepDiagnosticsRecord(BaseModel):
    n_qubits: int
    register: List[int]
    pattern_ground: str
    pattern_reference: str
    stages: List[StageRecord]
    population_ground: float
    population_reference: float
    leakage: float


class PeaksDocument(BaseModel):
    peaks: List[PeakRecord]
    sector: Optional[float] = None
