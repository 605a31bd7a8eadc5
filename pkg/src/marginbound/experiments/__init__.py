"""Experiment sweeps, figure rendering, and the command-line interface."""

from .config import RunConfig, load_config_file, make_config
from .plots import emit_plot
from .sweeps import (
    SweepResult,
    compare_norms,
    sweep_random_labels,
    sweep_sample_size,
    sweep_sigma,
)

__all__ = [
    "RunConfig",
    "SweepResult",
    "compare_norms",
    "emit_plot",
    "load_config_file",
    "make_config",
    "sweep_random_labels",
    "sweep_sample_size",
    "sweep_sigma",
]
