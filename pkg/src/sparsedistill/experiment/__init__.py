"""Experiment orchestration: config files, pipeline phases, method comparison and the CLI."""

from .config import METHODS, DatasetSpec, ExperimentConfig

__all__ = ["METHODS", "DatasetSpec", "ExperimentConfig"]
