"""Continuous-variable measurement-device-independent QKD link simulator."""

from .core import (PROFILES, ConfigError, SnuScale, SystemConfig, db_to_transmittance,
                   derive_stream, generative_xi, load_config, validate_config)
from .kernels import BACKEND
from .pipeline import RunResult, StageError, run_simulation
from .security import KeyRateReport, RelayFit, analytic_fit, fit_relay_model, key_rate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "PROFILES", "ConfigError", "KeyRateReport", "RelayFit", "RunResult", "SnuScale",
    "StageError", "SystemConfig", "analytic_fit", "db_to_transmittance", "derive_stream",
    "fit_relay_model", "generative_xi", "key_rate", "load_config", "run_simulation",
    "validate_config",
]
