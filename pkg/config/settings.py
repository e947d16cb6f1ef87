"""
Configuration management using Singleton pattern.
Loads settings from environment variables with fallback to .env file.
"""

from typing import Literal, Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, field_validator
from threading import Lock
from functools import lru_cache


class Settings(BaseSettings):
    """
    Engine settings loaded from environment variables.
    Numerical tolerances, truncation caps and integrator defaults live here;
    scenario files override the per-run parameters only.
    """

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=False, extra="ignore"
    )

    # Application Configuration
    APP_NAME: str = Field(default="Aperiodic Normal Forms")
    APP_ENV: str = Field(default="development")
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FILE: str = Field(default="logs/normal_forms.log")
    OUTPUT_DIR: str = Field(default="runs")

    # Time-function algebra
    EXPPOLY_TERM_CAP: int = Field(default=512)
    EXPONENT_MERGE_TOL: float = Field(default=1e-12)
    QUAD_TOL: float = Field(default=1e-10)
    QUAD_T_MAX_FACTOR: float = Field(default=40.0)
    QUAD_MAX_NODES: int = Field(default=257)
    ENVELOPE_SAMPLES: int = Field(default=2001)
    ENVELOPE_RTOL: float = Field(default=1e-7)
    RATE_MARGIN: float = Field(default=0.9)

    # Fourier-Taylor algebra
    CHEB_INFLATION: float = Field(default=2.0)
    PRUNE_TOL: float = Field(default=1e-14)
    LIE_SERIES_MAX_ORDER: int = Field(default=40)
    LIE_SERIES_TOL: float = Field(default=1e-16)

    # Normal forms
    BIRKHOFF_INITIAL_CONDITION: Literal["decaying", "zero"] = Field(default="decaying")
    NEKHO_EXTRA_LEVELS: int = Field(default=4)
    HOMOLOGICAL_RESIDUAL_SAMPLES: int = Field(default=100)
    HOMOLOGICAL_RESIDUAL_TOL: float = Field(default=1e-12)
    LEVEL_RESIDUAL_TOL: float = Field(default=1e-10)

    # Constants calculator
    CONSTANTS_DPS: int = Field(default=50)
    SCHEDULE_SUM_TERMS: int = Field(default=10_000)
    SCHEDULE_REPORT_STEPS: int = Field(default=20)
    SEQUENCE_REL_TOL: float = Field(default=1e-12)

    # Dynamics
    INTEGRATOR_METHOD: str = Field(default="DOP853")
    INTEGRATOR_RTOL: float = Field(default=1e-10)
    INTEGRATOR_ATOL: float = Field(default=1e-30)
    TRAJECTORY_SAMPLES: int = Field(default=2000)
    INVERSE_MAP_ITERATIONS: int = Field(default=8)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"Invalid LOG_LEVEL. Must be one of {valid_levels}")
        return v_upper

    @field_validator("APP_ENV")
    @classmethod
    def validate_app_env(cls, v: str) -> str:
        """Validate application environment."""
        valid_envs = ["development", "staging", "production", "testing"]
        v_lower = v.lower()
        if v_lower not in valid_envs:
            raise ValueError(f"Invalid APP_ENV. Must be one of {valid_envs}")
        return v_lower

    @field_validator(
        "EXPONENT_MERGE_TOL",
        "QUAD_TOL",
        "QUAD_T_MAX_FACTOR",
        "ENVELOPE_RTOL",
        "PRUNE_TOL",
        "LIE_SERIES_TOL",
        "HOMOLOGICAL_RESIDUAL_TOL",
        "LEVEL_RESIDUAL_TOL",
        "SEQUENCE_REL_TOL",
        "INTEGRATOR_RTOL",
        "INTEGRATOR_ATOL",
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Validate tolerances are strictly positive."""
        if not v > 0:
            raise ValueError(f"Tolerance must be strictly positive, got {v}")
        return v

    @field_validator("CHEB_INFLATION")
    @classmethod
    def validate_inflation(cls, v: float) -> float:
        """The grid sup-norm inflation can only enlarge the node maximum."""
        if v < 1.0:
            raise ValueError(f"CHEB_INFLATION must be >= 1, got {v}")
        return v

    @field_validator("RATE_MARGIN")
    @classmethod
    def validate_rate_margin(cls, v: float) -> float:
        """Validate the rate margin is a fraction."""
        if not 0 < v <= 1:
            raise ValueError(f"RATE_MARGIN must be in (0, 1], got {v}")
        return v

    @field_validator("EXPPOLY_TERM_CAP", "QUAD_MAX_NODES", "ENVELOPE_SAMPLES")
    @classmethod
    def validate_counts(cls, v: int) -> int:
        """Validate table sizes."""
        if v < 8:
            raise ValueError(f"Table size must be at least 8, got {v}")
        return v

    def is_testing(self) -> bool:
        """Check if running under the test suite."""
        return self.APP_ENV == "testing"


class SettingsManager:
    """
    Process-wide holder of the engine settings.
    Services that are not handed a Settings object read this one.
    """

    _instance: Optional["SettingsManager"] = None
    _lock: Lock = Lock()
    _settings: Optional[Settings] = None

    def __new__(cls) -> "SettingsManager":
        """
        Double-checked locking so concurrent first calls share one instance.
        """
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super(SettingsManager, cls).__new__(cls)
                    cls._instance._initialized = False
        return cls._instance

    def __init__(self) -> None:
        """Initialize settings manager."""
        if self._initialized:
            return

        self._settings = Settings()
        self._initialized = True

    @property
    def settings(self) -> Settings:
        """
        Get settings instance.

        Returns:
            Settings object
        """
        if self._settings is None:
            raise RuntimeError("Settings not initialized")
        return self._settings

    @classmethod
    def reset_instance(cls) -> None:
        """Reset singleton instance. Useful for testing."""
        with cls._lock:
            cls._instance = None


@lru_cache()
def get_settings() -> Settings:
    """
    Active engine settings (cached; tests clear the cache between runs).
    """
    manager = SettingsManager()
    return manager.settings


# Global settings instance for convenience
settings = get_settings()
