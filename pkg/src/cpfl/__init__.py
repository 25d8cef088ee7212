"""Trace-driven simulator for cohort-parallel federated learning."""

from .config import ExperimentConfig, parse_config
from .experiment import RunReport, run_experiment
from .report import emit_report

__all__ = ["ExperimentConfig", "RunReport", "emit_report", "parse_config", "run_experiment"]
__version__ = "0.1.0"
