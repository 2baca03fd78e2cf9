from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):

    # Parallelism
    threads: int = 1  # MKFIT_THREADS

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Run ledger
    ledger_enabled: bool = True
    database_url: Optional[str] = None  # defaults to sqlite in the run's out dir

    # Metrics
    metrics_enabled: bool = True

    # Adaptive Gauss-Kronrod tolerances
    quad_epsabs: float = 1e-13
    quad_epsrel: float = 1e-11

    # Application
    app_title: str = "mkfit"
    app_version: str = "1.0.0"

    model_config = SettingsConfigDict(
        env_prefix="MKFIT_",
        env_file=".env",
        case_sensitive=False,
    )


settings = Settings()
