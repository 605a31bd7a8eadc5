"""Minibatch Adam training for the bias-free ReLU networks."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, TrainingError
from .network import MlpParams, init_mlp, loss_and_gradient, zero_one_error


@dataclass
class TrainConfig:
    """Optimizer and loop settings.

    epochs = 0 is a no-op that returns the initial parameters unchanged.
    When train() draws the initial weights itself they are i.i.d.
    N(0, (init_scale / sqrt(fan_in))^2), from the same seed.
    """

    epochs: int
    learning_rate: float = 1e-3
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ArgumentError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ArgumentError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ArgumentError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ArgumentError("eps must be positive")
        if self.init_scale <= 0:
            raise ArgumentError("init_scale must be positive")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, num_params: int):
        return cls(np.zeros(num_params), np.zeros(num_params), 0)


@dataclass
class TrainHistory:
    """Per-epoch mean training loss and 0-1 training error."""

    epoch_losses: list = field(default_factory=list)
    epoch_errors: list = field(default_factory=list)


def cross_entropy(logits, label):
    """Cross-entropy of one logit vector against an integer label.

    Uses max subtraction, so extreme logits do not overflow.

    Returns:
        (loss, probs): the scalar loss and the softmax probabilities.
    """
    z = np.asarray(logits, dtype=np.float64)
    label = int(label)
    if not 0 <= label < z.size:
        raise ArgumentError(f"label {label} out of range [0, {z.size})")
    shifted = z - z.max()
    e = np.exp(shifted)
    total = e.sum()
    loss = float(math.log(total) - shifted[label])
    return loss, e / total


def adam_step(params: MlpParams, grad, state: AdamState, config: TrainConfig):
    """One Adam update on the flattened parameters.

    Raises:
        TrainingError: the gradient contains a non-finite entry; the
            message names the failing step index.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient at step {state.t + 1}")
    t = state.t + 1
    m = config.beta1 * state.m + (1 - config.beta1) * grad
    v = config.beta2 * state.v + (1 - config.beta2) * grad * grad
    m_hat = m / (1 - config.beta1 ** t)
    v_hat = v / (1 - config.beta2 ** t)
    flat = params.flatten() - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return MlpParams.from_flat(flat, params.layer_dims), AdamState(m, v, t)


def train(dataset, config: TrainConfig, init_params=None, layer_dims=None):
    """Train with shuffled minibatch Adam.

    Each epoch draws a fresh seeded permutation and walks it in batches of
    config.batch_size, keeping the final short batch as-is. The whole run
    is a pure function of (dataset, config, init_params).

    Args:
        dataset: LabeledDataset to fit.
        config: TrainConfig.
        init_params: starting weights; if None, layer_dims is required and
            the weights are drawn from config.seed.
        layer_dims: [input_dim, width_1, ..., num_classes], only used when
            init_params is None.

    Returns:
        (params, history): final weights and per-epoch TrainHistory.
    """
    if init_params is None:
        if layer_dims is None:
            raise ArgumentError("either init_params or layer_dims is required")
        params = init_mlp(layer_dims, config.seed, config.init_scale)
    else:
        params = init_params
    if params.layer_dims[0] != dataset.dim:
        raise ArgumentError(
            f"network input dim {params.layer_dims[0]} != data dim {dataset.dim}"
        )
    if params.layer_dims[-1] != dataset.num_classes:
        raise ArgumentError(
            f"network output dim {params.layer_dims[-1]} != "
            f"num_classes {dataset.num_classes}"
        )

    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros(params.num_params)
    history = TrainHistory()
    n = dataset.n
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start:start + config.batch_size]
            loss, grad = loss_and_gradient(
                params, dataset.features[batch], dataset.labels[batch])
            params, state = adam_step(params, grad, state, config)
            loss_sum += loss * batch.size
        history.epoch_losses.append(loss_sum / n)
        history.epoch_errors.append(zero_one_error(params, dataset))
    return params, history
