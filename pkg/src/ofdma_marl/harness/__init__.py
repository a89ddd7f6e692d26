"""Experiment orchestration: configs, training, evaluation, metrics and exports."""

from .config import ExperimentConfig, reduced_config
from .evaluation import run_evaluation
from .metrics import MetricRecord, compute_metrics
from .training import run_training

__all__ = ["ExperimentConfig", "MetricRecord", "compute_metrics", "reduced_config", "run_evaluation", "run_training"]
