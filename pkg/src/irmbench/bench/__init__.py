"""Experiment runner, verification suites and report emitters."""

from .config import ConfigError, ExperimentConfig
from .experiment import TrialResult, aggregate, run_experiment
from .oracles import run_oracles
from .report import emit_bounds_table, emit_plot_data

__all__ = ["ConfigError", "ExperimentConfig", "TrialResult", "aggregate", "run_experiment", "run_oracles",
           "emit_bounds_table", "emit_plot_data"]
