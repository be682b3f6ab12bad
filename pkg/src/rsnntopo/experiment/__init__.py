"""Datasets, configuration, orchestration and the command-line interface."""

from .config import ExperimentConfig, load_config
from .pipeline import ComparisonReport, run_experiment, sweep_neurons, track_epochs

__all__ = ["ExperimentConfig", "load_config", "ComparisonReport", "run_experiment",
           "sweep_neurons", "track_epochs"]
