"""Resolved run configuration, config-file parsing, and provenance text."""

from dataclasses import dataclass, fields

from ..errors import ArgumentError

_INT_GRIDS = {"n_grid"}
_FLOAT_GRIDS = {"r_grid", "sigma2_grid"}
_PATH_LISTS = {"cifar_bin", "cifar_test_bin"}


@dataclass
class RunConfig:
    """Every knob of a training/bound run, with desk-scale defaults.

    Values resolve in three layers: these defaults, then a key=value
    config file, then command-line flags.
    """

    # data source
    source: str = "synthetic"
    num_classes: int = 3
    dim: int = 20
    separation: float = 6.0
    noise_std: float = 1.0
    pool_per_class: int = 0
    test_per_class: int = 200
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_test_images: str = ""
    mnist_test_labels: str = ""
    cifar_bin: tuple = ()
    cifar_test_bin: tuple = ()
    # architecture
    depth: int = 2
    width: int = 16
    # training
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 128
    init_scale: float = 1.0
    # bound
    sigma2: float = 100.0
    gamma: float = 1.0
    eta: float = 0.1
    delta: float = 0.05
    include_tail: bool = True
    use_exact_kl: bool = False
    theta0_zero: bool = False
    # sweep shape
    n: int = 300
    n_grid: tuple = (100, 500, 1000)
    r: float = 0.0
    r_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    sigma2_grid: tuple = (0.05, 0.1, 10.0, 100.0, 200.0)
    repeats: int = 5
    seed: int = 0
    out: str = "runs"

    def __post_init__(self):
        if self.source not in ("synthetic", "mnist", "cifar10"):
            raise ArgumentError(f"unknown source {self.source!r}")
        if self.depth < 2:
            raise ArgumentError("depth must be at least 2")
        if self.width < 1:
            raise ArgumentError("width must be positive")
        if self.repeats < 1:
            raise ArgumentError("repeats must be positive")

    def layer_dims(self, input_dim, num_classes):
        return [input_dim] + [self.width] * (self.depth - 1) + [num_classes]

    def provenance_text(self) -> str:
        """Deterministic key=value dump of every resolved setting."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, text):
    if name not in _FIELDS:
        raise ArgumentError(f"unknown config key {name!r}")
    text = text.strip()
    if name in _PATH_LISTS:
        return tuple(p for p in (s.strip() for s in text.split(",")) if p)
    if name in _INT_GRIDS:
        return tuple(int(s) for s in text.split(","))
    if name in _FLOAT_GRIDS:
        return tuple(float(s) for s in text.split(","))
    kind = type(_FIELDS[name].default)
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ArgumentError(f"config key {name!r} expects a boolean, got {text!r}")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ArgumentError(
            f"config key {name!r} expects {kind.__name__}, got {text!r}"
        ) from None
    return text


def load_config_file(path) -> dict:
    """Parse a key=value config file into typed values.

    Blank lines and lines starting with '#' are ignored. Keys must be
    RunConfig field names; values are coerced to the field's type, with
    comma-separated lists for the grid and path-list keys.
    """
    values = {}
    with open(str(path), "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ArgumentError(
                    f"{path}:{lineno}: expected key=value, got {line!r}"
                )
            key, text = line.split("=", 1)
            values[key.strip()] = _coerce(key.strip(), text)
    return values


def make_config(file_values=None, cli_values=None) -> RunConfig:
    """Resolve defaults, then config-file values, then CLI overrides."""
    merged = {}
    for layer in (file_values or {}, cli_values or {}):
        for key, value in layer.items():
            if key not in _FIELDS:
                raise ArgumentError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = value
    return RunConfig(**merged)
