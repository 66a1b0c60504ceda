from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="GSR_",
        case_sensitive=False,
        extra="ignore",
    )

    # Dense materialization caps
    dense_cap: int = 12
    sector_dense_cap: int = 4096

    # Propagation
    steps_per_unit_time: int = 200
    propagation_method: str = "magnus4"
    norm_tolerance: float = 1e-9

    # Tolerances
    grouping_tolerance: float = 1e-10
    residual_tolerance: float = 1e-9
    commutation_tolerance: float = 1e-10
    orthogonality_tolerance: float = 1e-10
    hermiticity_tolerance: float = 1e-10

    # Model construction
    penalty_term_budget: int = 4096

    # Protocol
    leakage_threshold: float = 0.05
    max_workers: int = 4

    # Spectral analysis
    omega_oversample: int = 20
    peak_threshold: float = 0.1
    peak_min_separation: float = 0.5
    fit_floor: float = 1e-3
    fit_max_nfev: int = 2000
    fit_max_components: int = 40

    # Logging / metrics
    log_level: str = "INFO"
    metrics_enabled: bool = True


settings = Settings()
