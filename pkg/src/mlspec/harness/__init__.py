"""Monte Carlo experiment harness."""
from .config import ConfigError, ExperimentConfig, build_config, load_config
from .emit import emit
from .runners import McRecord, RunResult, run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "build_config", "load_config", "emit",
    "McRecord", "RunResult", "run_experiment",
]
