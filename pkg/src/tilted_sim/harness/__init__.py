"""Experiment harness: configs, JSON-lines records, command pipelines, CLI."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .records import ResultRecord, read_records, write_records
from .commands import COMMANDS, run_experiment
from .plotdata import PlotSpec, emit_plot_data

__all__ = [
    "COMMANDS", "ConfigError", "ExperimentConfig", "PlotSpec", "ResultRecord",
    "config_from_dict", "emit_plot_data", "load_config", "read_records",
    "run_experiment", "write_records",
]
