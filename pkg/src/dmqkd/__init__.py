"""Discrete-modulated CV-QKD link simulator with a local local-oscillator receiver."""

from .config import ExperimentConfig, load_config, operating_point
from .constellation import Constellation, build_mb_constellation
from .exceptions import DMQKDError, StageError
from .experiment import run_end_to_end
from .optimizer import optimize
from .rate import RateParams, RateReport, secret_key_rate

__version__ = "0.1.0"

__all__ = [
    "Constellation",
    "build_mb_constellation",
    "ExperimentConfig",
    "load_config",
    "operating_point",
    "run_end_to_end",
    "optimize",
    "RateParams",
    "RateReport",
    "secret_key_rate",
    "DMQKDError",
    "StageError",
]
