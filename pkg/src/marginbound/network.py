"""Bias-free ReLU multilayer perceptrons and their linearizations.

A network with depth k is a list of weight matrices W_1..W_k with ReLU
between layers and none after the last. With the ReLU pattern of a given
input frozen into 0/1 masks, the network is linear in the input and degree
one in every single weight, which the Jacobian and curvature code relies
on. Forward passes and masked (realized) forward passes use the same
matrix-vector products in the same order, so their outputs agree bitwise.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataFormatError, DataIOError

CHECKPOINT_MAGIC = b"MBNET001"


@dataclass
class MlpParams:
    """Weights of a bias-free MLP, one (fan_out, fan_in) matrix per layer."""

    layers: list

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ArgumentError("depth must be at least 2")
        self.layers = [np.ascontiguousarray(w, dtype=np.float64) for w in self.layers]
        for i, w in enumerate(self.layers):
            if w.ndim != 2:
                raise ArgumentError(f"layer {i + 1} is not a matrix")
            if i > 0 and w.shape[1] != self.layers[i - 1].shape[0]:
                raise ArgumentError(
                    f"layer {i + 1} expects fan-in {w.shape[1]} but layer "
                    f"{i} has fan-out {self.layers[i - 1].shape[0]}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def layer_dims(self) -> list:
        """[input_dim, width_1, ..., width_k] with width_k = num outputs."""
        return [self.layers[0].shape[1]] + [w.shape[0] for w in self.layers]

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.layers)

    def flatten(self) -> np.ndarray:
        """Concatenate all layers, first to last, each row-major."""
        return np.concatenate([w.ravel() for w in self.layers])

    @classmethod
    def from_flat(cls, flat, layer_dims):
        """Inverse of flatten for the given [in, w_1, ..., w_k] dims."""
        flat = np.asarray(flat, dtype=np.float64)
        shapes = [(layer_dims[i + 1], layer_dims[i]) for i in range(len(layer_dims) - 1)]
        total = sum(o * i for o, i in shapes)
        if flat.shape != (total,):
            raise ArgumentError(
                f"flat vector has {flat.size} entries, dims need {total}"
            )
        layers, off = [], 0
        for out_dim, in_dim in shapes:
            layers.append(flat[off:off + out_dim * in_dim].reshape(out_dim, in_dim).copy())
            off += out_dim * in_dim
        return cls(layers)


@dataclass
class ActivationMask:
    """Per-hidden-layer 0/1 unit masks; bit 1 means pre-activation > 0."""

    unit_masks: list

    def __post_init__(self):
        self.unit_masks = [np.ascontiguousarray(m, dtype=np.float64)
                           for m in self.unit_masks]

    def edge_mask_flat(self, params: MlpParams) -> np.ndarray:
        """Expand unit masks to one 0/1 bit per weight, in flatten order.

        Row u of layer h is live iff unit u of layer h is active; the last
        layer is never masked.
        """
        if len(self.unit_masks) != params.depth - 1:
            raise ArgumentError("mask depth does not match network depth")
        parts = []
        for h, w in enumerate(params.layers):
            if h < params.depth - 1:
                parts.append(np.repeat(self.unit_masks[h], w.shape[1]))
            else:
                parts.append(np.ones(w.size))
        return np.concatenate(parts)


def init_mlp(layer_dims, seed, init_scale=1.0) -> MlpParams:
    """Draw weights i.i.d. N(0, (init_scale / sqrt(fan_in))^2), seeded."""
    if init_scale <= 0:
        raise ArgumentError("init_scale must be positive")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(layer_dims) - 1):
        fan_in, fan_out = layer_dims[i], layer_dims[i + 1]
        std = init_scale / np.sqrt(fan_in)
        layers.append(std * rng.standard_normal((fan_out, fan_in)))
    return MlpParams(layers)


def forward(params: MlpParams, x):
    """Run the network on one input.

    Returns:
        (logits, preacts): the final k-vector of logits and the list of
        hidden pre-activation vectors z_1..z_{k-1}.
    """
    a = np.asarray(x, dtype=np.float64)
    preacts = []
    for w in params.layers[:-1]:
        z = w @ a
        preacts.append(z)
        a = z * (z > 0.0)
    logits = params.layers[-1] @ a
    return logits, preacts


def activation_mask(params: MlpParams, x) -> ActivationMask:
    """ReLU pattern of `x`: bit 1 iff the pre-activation is strictly positive."""
    _, preacts = forward(params, x)
    return ActivationMask([(z > 0.0).astype(np.float64) for z in preacts])


def realized_linear_forward(params: MlpParams, mask: ActivationMask, x):
    """Run the linear network obtained by freezing the given ReLU pattern.

    Each hidden layer multiplies by W_h and then zeroes masked units. With
    the mask taken at the same input this reproduces forward() bitwise.
    """
    if len(mask.unit_masks) != params.depth - 1:
        raise ArgumentError("mask depth does not match network depth")
    a = np.asarray(x, dtype=np.float64)
    for w, m in zip(params.layers[:-1], mask.unit_masks):
        a = (w @ a) * m
    return params.layers[-1] @ a


def batch_logits(params: MlpParams, features) -> np.ndarray:
    """Logits for every row of a (n, dim) feature matrix."""
    a = np.asarray(features, dtype=np.float64)
    for w in params.layers[:-1]:
        z = a @ w.T
        a = z * (z > 0.0)
    return a @ params.layers[-1].T


def scale_params(params: MlpParams, lam: float) -> MlpParams:
    """Multiply every weight by lam > 0 (logits scale by lam^depth)."""
    if not lam > 0:
        raise ArgumentError("scale factor must be positive")
    return MlpParams([lam * w for w in params.layers])


def output_jacobian(params: MlpParams, x) -> np.ndarray:
    """Exact Jacobian of the logits with respect to the flat parameters.

    Returns a (num_outputs, num_params) matrix in flatten order, using the
    ReLU pattern of `x` (derivative of a unit equals its mask bit).
    """
    x = np.asarray(x, dtype=np.float64)
    k = params.depth
    acts = [x]
    masks = []
    for w in params.layers[:-1]:
        z = w @ acts[-1]
        m = (z > 0.0).astype(np.float64)
        masks.append(m)
        acts.append(z * m)
    num_out = params.layers[-1].shape[0]

    blocks = [None] * k
    # back[c, u] = d logit_c / d z_h[u]; start at the top layer.
    back = np.eye(num_out)
    blocks[k - 1] = np.einsum("cu,v->cuv", back, acts[k - 1]).reshape(num_out, -1)
    for h in range(k - 2, -1, -1):
        back = (back @ params.layers[h + 1]) * masks[h][None, :]
        blocks[h] = np.einsum("cu,v->cuv", back, acts[h]).reshape(num_out, -1)
    return np.concatenate(blocks, axis=1)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts 1-D or 2-D input."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_gradient(params: MlpParams, features, labels):
    """Mean cross-entropy over a batch and its flat-parameter gradient."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    acts = [X]
    masks = []
    for w in params.layers[:-1]:
        z = acts[-1] @ w.T
        m = (z > 0.0).astype(np.float64)
        masks.append(m)
        acts.append(z * m)
    logits = acts[-1] @ params.layers[-1].T

    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), y]))

    probs = softmax(logits)
    dz = probs
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grads = [None] * params.depth
    grads[-1] = dz.T @ acts[-1]
    back = dz @ params.layers[-1]
    for h in range(params.depth - 2, -1, -1):
        dz = back * masks[h]
        grads[h] = dz.T @ acts[h]
        back = dz @ params.layers[h]
    return loss, np.concatenate([g.ravel() for g in grads])


def loss_gradient(params: MlpParams, features, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to flat parameters."""
    return loss_and_gradient(params, features, labels)[1]


def zero_one_error(params: MlpParams, ds) -> float:
    """Fraction of examples whose argmax logit differs from the label."""
    preds = np.argmax(batch_logits(params, ds.features), axis=1)
    return float(np.mean(preds != ds.labels))


def save_checkpoint(params: MlpParams, path) -> None:
    """Write weights to a small versioned binary file.

    Layout: 8-byte magic, little-endian uint32 depth, uint32 input dim,
    uint32 width per layer, then the flat float64 weights.
    """
    dims = params.layer_dims
    header = CHECKPOINT_MAGIC + struct.pack(
        "<I", params.depth) + struct.pack(f"<{len(dims)}I", *dims)
    body = params.flatten().astype("<f8").tobytes()
    with open(str(path), "wb") as fh:
        fh.write(header + body)


def load_checkpoint(path) -> MlpParams:
    """Read weights written by save_checkpoint.

    Raises:
        DataFormatError: wrong magic or trailing bytes.
        DataIOError: file shorter than the header and weights require.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    if len(buf) < len(CHECKPOINT_MAGIC) + 4:
        raise DataIOError(f"{path}: truncated at byte {len(buf)}")
    if buf[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic {buf[:8]!r}")
    off = len(CHECKPOINT_MAGIC)
    depth = struct.unpack("<I", buf[off:off + 4])[0]
    off += 4
    if depth < 2:
        raise DataFormatError(f"{path}: depth {depth} is below 2")
    need = off + 4 * (depth + 1)
    if len(buf) < need:
        raise DataIOError(f"{path}: truncated at byte {len(buf)}, expected {need}")
    dims = list(struct.unpack(f"<{depth + 1}I", buf[off:need]))
    off = need
    total = sum(dims[i + 1] * dims[i] for i in range(depth))
    expected = off + 8 * total
    if len(buf) < expected:
        raise DataIOError(
            f"{path}: truncated at byte {len(buf)}, expected {expected}"
        )
    if len(buf) > expected:
        raise DataFormatError(f"{path}: {len(buf) - expected} trailing bytes")
    flat = np.frombuffer(buf, dtype="<f8", count=total, offset=off)
    return MlpParams.from_flat(flat, dims)
