"""Configuration and settings."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Laboratory settings loaded from environment variables (prefix RENEWAL_LAB_)."""

    model_config = SettingsConfigDict(
        env_prefix="RENEWAL_LAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Trend protocol for o(1)/O(1) verdicts on a finite scan
    decay_ratio: float = Field(4.0, gt=1.0)
    decay_slope: float = -0.05
    bounded_factor: float = Field(1.5, gt=0.0)
    u_ratio_threshold: float = Field(1.02, gt=1.0)
    negligible_level: float = Field(1e-3, ge=0.0)
    min_decades: float = Field(2.0, gt=0.0)

    # Quadrature
    quad_epsrel: float = Field(1e-8, gt=0.0)
    quad_limit: int = Field(200, ge=10)
    quad_retries: int = Field(4, ge=1)

    # Convolution engine
    clamp_threshold: float = Field(1e-15, gt=0.0)
    clamp_budget: float = Field(1e-9, gt=0.0)
    window_budget: float = Field(1e-9, gt=0.0)
    reprojection_interval: int = Field(32, ge=1)
    default_window_log2: int = Field(21, ge=4, le=28)
    budget_mb: float = Field(4096.0, gt=0.0)

    # Lattice builders
    window_capture: float = Field(0.99, gt=0.0, lt=1.0)
    tail_band: float = Field(0.05, gt=0.0)

    # Monte Carlo
    mc_samples: int = Field(100_000, ge=1)
    chunk_size: int = Field(8192, ge=1)
    threads: int = Field(1, ge=1)
    step_cap: int = Field(4096, ge=1)
    confidence: float = Field(0.95, gt=0.0, lt=1.0)

    delta_grid: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05, 0.025)

    def trend_thresholds(self) -> dict[str, float]:
        """The thresholds every criterion report records."""
        return {
            "decay_ratio": self.decay_ratio,
            "decay_slope": self.decay_slope,
            "bounded_factor": self.bounded_factor,
            "u_ratio_threshold": self.u_ratio_threshold,
            "negligible_level": self.negligible_level,
            "min_decades": self.min_decades,
        }


def get_settings() -> Settings:
    """Get application settings."""
    return Settings()
