"""Dataset containers, file loaders, and label/sampling transforms.

Supported sources are the IDX image/label format, CIFAR-10 binary batches,
and a synthetic Gaussian-cluster generator. All loaders return a
:class:`LabeledDataset` with float64 features and int64 labels.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ArgumentError,
    DataConsistencyError,
    DataFormatError,
    DataIOError,
)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR_RECORD_BYTES = 3073
STD_FLOOR = 1e-12


@dataclass
class LabeledDataset:
    """A fixed classification sample.

    Attributes:
        features: (n, dim) float64 array, one row per example.
        labels: (n,) int64 array with values in [0, num_classes).
        num_classes: number of classes k >= 2.
        name: short source tag ("mnist", "cifar10", "synthetic", ...).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ArgumentError("features must be a 2-D array")
        if self.labels.ndim != 1:
            raise ArgumentError("labels must be a 1-D array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ArgumentError(
                f"feature rows ({self.features.shape[0]}) and labels "
                f"({self.labels.shape[0]}) disagree"
            )
        if self.features.shape[0] < 1:
            raise ArgumentError("dataset must contain at least one example")
        if self.num_classes < 2:
            raise ArgumentError("num_classes must be at least 2")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ArgumentError(
                f"labels must lie in [0, {self.num_classes})"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def _read_be32(buf: bytes, offset: int, path: str) -> int:
    if len(buf) < offset + 4:
        raise DataIOError(
            f"{path}: truncated header, file ends at byte {len(buf)}, "
            f"expected at least {offset + 4}"
        )
    return struct.unpack(">I", buf[offset:offset + 4])[0]


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image file and its IDX label file.

    Args:
        images_path: path to an IDX3 image file (magic 2051).
        labels_path: path to an IDX1 label file (magic 2049).

    Returns:
        LabeledDataset with features flattened row-major to (n, rows*cols),
        pixel values in [0, 255] as float64, and num_classes = 10.

    Raises:
        DataFormatError: wrong magic number, empty file, or label >= 10.
        DataConsistencyError: image and label counts disagree.
        DataIOError: either file is truncated; message gives byte offsets.
    """
    images_path, labels_path = str(images_path), str(labels_path)
    ibuf = _read_file(images_path)
    lbuf = _read_file(labels_path)

    magic = _read_be32(ibuf, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(
            f"{images_path}: expected image magic {IDX_IMAGE_MAGIC}, got {magic}"
        )
    n_images = _read_be32(ibuf, 4, images_path)
    rows = _read_be32(ibuf, 8, images_path)
    cols = _read_be32(ibuf, 12, images_path)
    expected = 16 + n_images * rows * cols
    if len(ibuf) < expected:
        raise DataIOError(
            f"{images_path}: truncated at byte {len(ibuf)}, "
            f"expected {expected} bytes"
        )

    magic = _read_be32(lbuf, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise DataFormatError(
            f"{labels_path}: expected label magic {IDX_LABEL_MAGIC}, got {magic}"
        )
    n_labels = _read_be32(lbuf, 4, labels_path)
    if len(lbuf) < 8 + n_labels:
        raise DataIOError(
            f"{labels_path}: truncated at byte {len(lbuf)}, "
            f"expected {8 + n_labels} bytes"
        )

    if n_images != n_labels:
        raise DataConsistencyError(
            f"image count {n_images} != label count {n_labels}"
        )
    if n_images == 0:
        raise DataFormatError(f"{images_path}: dataset is empty")

    pixels = np.frombuffer(ibuf, dtype=np.uint8, count=n_images * rows * cols,
                           offset=16)
    labels = np.frombuffer(lbuf, dtype=np.uint8, count=n_labels, offset=8)
    if labels.max() >= 10:
        raise DataFormatError(
            f"{labels_path}: label value {int(labels.max())} out of range [0, 10)"
        )
    features = pixels.reshape(n_images, rows * cols).astype(np.float64)
    return LabeledDataset(features, labels.astype(np.int64), 10, name="mnist")


def load_cifar10_bin(paths) -> LabeledDataset:
    """Load one or more CIFAR-10 binary batch files, concatenated in order.

    Each record is 3073 bytes: one label byte then 3072 pixel bytes.

    Raises:
        DataFormatError: a file size is not a multiple of 3073, a label is
            out of range, or no records are present.
    """
    paths = [str(p) for p in paths]
    if not paths:
        raise ArgumentError("at least one CIFAR batch path is required")
    feature_parts, label_parts = [], []
    for path in paths:
        buf = _read_file(path)
        if len(buf) == 0 or len(buf) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(buf)} is not a positive multiple of "
                f"{CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels = records[:, 0]
        if labels.max() >= 10:
            raise DataFormatError(
                f"{path}: label value {int(labels.max())} out of range [0, 10)"
            )
        label_parts.append(labels.astype(np.int64))
        feature_parts.append(records[:, 1:].astype(np.float64))
    features = np.concatenate(feature_parts, axis=0)
    labels = np.concatenate(label_parts, axis=0)
    return LabeledDataset(features, labels, 10, name="cifar10")


def make_synthetic(num_classes, dim, samples_per_class, separation,
                   noise_std, seed) -> LabeledDataset:
    """Draw Gaussian clusters centred on scaled coordinate axes.

    Class c is centred at (separation / sqrt(2)) * e_c, so every pair of
    centres is exactly `separation` apart. Points are centre plus
    N(0, noise_std^2 I) noise. The draw is deterministic in `seed` and
    rows are grouped class-major with exactly samples_per_class rows each.
    """
    if num_classes < 2:
        raise ArgumentError("num_classes must be at least 2")
    if dim < num_classes:
        raise ArgumentError(
            f"dim ({dim}) must be at least num_classes ({num_classes})"
        )
    if samples_per_class < 1:
        raise ArgumentError("samples_per_class must be positive")
    if separation < 0 or noise_std < 0:
        raise ArgumentError("separation and noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    scale = separation / np.sqrt(2.0)
    centers = np.zeros((num_classes, dim))
    centers[np.arange(num_classes), np.arange(num_classes)] = scale
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), samples_per_class)
    noise = rng.standard_normal((labels.size, dim))
    features = centers[labels] + noise_std * noise
    return LabeledDataset(features, labels, num_classes, name="synthetic")


def normalization_stats(ds: LabeledDataset):
    """Scalar mean and standard deviation over every feature entry.

    The standard deviation is floored at 1e-12 so constant features do not
    divide by zero. Requires n >= 2.
    """
    if ds.n < 2:
        raise ArgumentError("normalization requires at least two examples")
    mean = float(ds.features.mean())
    std = float(ds.features.std())
    return mean, max(std, STD_FLOOR)


def apply_normalization(ds: LabeledDataset, mean: float, std: float) -> LabeledDataset:
    """Shift and scale every feature entry by the given scalar stats."""
    if std <= 0:
        raise ArgumentError("std must be positive")
    return replace(ds, features=(ds.features - mean) / std)


def normalize(ds: LabeledDataset) -> LabeledDataset:
    """Normalize features by the dataset's own scalar mean and std."""
    mean, std = normalization_stats(ds)
    return apply_normalization(ds, mean, std)


def randomize_labels(ds: LabeledDataset, fraction: float, seed) -> LabeledDataset:
    """Redraw a fraction of each class's labels uniformly over all classes.

    For each class c, exactly round(fraction * count_c) members are chosen
    uniformly without replacement (round = half-up) and their labels are
    redrawn uniformly from [0, k), so a redrawn label may collide with the
    original. Classes are processed in ascending order with a single
    seeded generator, so the result is deterministic in `seed`.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    labels = ds.labels.copy()
    for cls in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == cls)
        count = int(np.floor(fraction * members.size + 0.5))
        if count == 0:
            continue
        chosen = rng.choice(members, size=count, replace=False)
        labels[chosen] = rng.integers(0, ds.num_classes, size=count)
    return replace(ds, labels=labels)


def balanced_subsample(ds: LabeledDataset, n: int, seed) -> LabeledDataset:
    """Draw exactly n/k examples per class, without replacement.

    Rows are returned grouped class-major. Requires k to divide n and each
    class to hold at least n/k members.
    """
    if n < 1:
        raise ArgumentError("n must be positive")
    if n % ds.num_classes != 0:
        raise ArgumentError(
            f"n ({n}) must be divisible by num_classes ({ds.num_classes})"
        )
    per_class = n // ds.num_classes
    rng = np.random.default_rng(seed)
    picks = []
    for cls in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == cls)
        if members.size < per_class:
            raise ArgumentError(
                f"class {cls} has {members.size} examples, needs {per_class}"
            )
        picks.append(rng.choice(members, size=per_class, replace=False))
    order = np.concatenate(picks)
    return replace(ds, features=ds.features[order], labels=ds.labels[order])
