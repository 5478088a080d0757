"""
Application configuration settings.
"""
from typing import Tuple

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    # API Settings
    API_V1_STR: str = "/api"
    PROJECT_NAME: str = "Spin Bath Decoherence Toolkit"
    ENV: str = "development"
    DEBUG: bool = False

    # Server Settings
    HOST: str = "127.0.0.1"
    PORT: int = 8000

    # Logging
    LOG_LEVEL: str = "INFO"

    # Dense exact diagonalization
    ED_MAX_SITES: int = 12
    ED_DENSE_MAX_SITES: int = 10
    PARITY_EXACT_MAX_SITES: int = 12
    DEGENERACY_ATOL: float = 1e-9
    QUASI_DEGENERATE_GAP: float = 0.1
    QUASI_DEGENERATE_RATIO: float = 0.1

    # Gate compiler
    COMPILER_MAX_SITES: int = 10

    # Free fermions
    ZERO_MODE_RTOL: float = 1e-12

    # Fits
    ALPHA_WINDOW_LOW: float = 1e-6
    ALPHA_WINDOW_HIGH: float = 0.05
    ALPHA_RATIO_TOL: float = 0.02
    FIT_RESIDUAL_FLAG: float = 1e-3
    CRITICAL_EXCLUSION_SITES: float = 4.0
    ENVELOPE_FLOOR: float = 1e-8
    PLATEAU_REVIVAL_FRACTION: float = 0.8

    # Runs and artifacts
    DEFAULT_TIME_POINTS: int = 2001
    CSV_SIGNIFICANT_DIGITS: int = 15
    SCHEMA_VERSION: str = "1"
    THREADS: int = 1

    @field_validator("LOG_LEVEL")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {v!r}")
        return level

    @field_validator("ED_MAX_SITES", "ED_DENSE_MAX_SITES", "COMPILER_MAX_SITES", "THREADS")
    @classmethod
    def positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @property
    def alpha_window(self) -> Tuple[float, float]:
        return (self.ALPHA_WINDOW_LOW, self.ALPHA_WINDOW_HIGH)

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_prefix="SPINBATH_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
