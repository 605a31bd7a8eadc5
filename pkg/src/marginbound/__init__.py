"""Training and margin-bound certification for small bias-free ReLU nets.

The package trains multilayer perceptrons with Adam, evaluates a
curvature-based generalization certificate for the trained deterministic
network, Monte-Carlo-checks the concentration inequalities the certificate
rests on, and drives the desk-scale experiment sweeps behind it.
"""

from . import bound, concentration, dataset, errors, network, trainer
from .bound import (
    AssumptionConstants,
    BoundConfig,
    BoundReport,
    FastRateConstants,
    evaluate_bound,
    fast_rate_constants,
    margin_curve,
    margin_loss,
    sample_complexity,
    spectral_norm_product,
)
from .dataset import LabeledDataset, make_synthetic, normalize
from .network import MlpParams, forward, init_mlp, realized_linear_forward
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AssumptionConstants",
    "BoundConfig",
    "BoundReport",
    "FastRateConstants",
    "LabeledDataset",
    "MlpParams",
    "TrainConfig",
    "bound",
    "concentration",
    "dataset",
    "errors",
    "evaluate_bound",
    "fast_rate_constants",
    "forward",
    "init_mlp",
    "make_synthetic",
    "margin_curve",
    "margin_loss",
    "network",
    "normalize",
    "realized_linear_forward",
    "sample_complexity",
    "spectral_norm_product",
    "train",
    "trainer",
]
