"""Stochastic Burgers laboratory package public exports."""
__version__ = "1.0.0"

from .config import Config, get_config
from .errors import BurgersLabError, ConfigurationError
from .experiment_config import ExperimentConfig
from .report_store import ReportStore

__all__ = [
    "Config",
    "get_config",
    "BurgersLabError",
    "ConfigurationError",
    "ExperimentConfig",
    "ReportStore",
]
