"""Experiment harness: ingestion, configuration, orchestration and CSV output."""

from .config import ConfigError, ExperimentConfig
from .experiment import MetricsRecord, prepare_data, run_experiment
from .io import load_idx, load_libsvm, load_npz, random_projection, save_synthetic

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsRecord",
    "load_idx",
    "load_libsvm",
    "load_npz",
    "prepare_data",
    "random_projection",
    "run_experiment",
    "save_synthetic",
]
