"""Sweep drivers: train networks over a grid and certify each run.

Every sweep writes, into its output directory: results.csv (deterministic
in the config, never containing wall-clock data), summary.csv with
per-grid-point means and stds, config.txt with every resolved setting,
timings.csv with wall times, checkpoints/ with one trained network per
(grid point, repeat), and the headline figures. Rerunning with the same
output directory reuses existing checkpoints instead of retraining.
"""

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bound import CSV_COLUMNS, BoundConfig, evaluate_bound, spectral_norm_product
from ..dataset import (
    apply_normalization,
    balanced_subsample,
    load_cifar10_bin,
    load_mnist_idx,
    make_synthetic,
    normalization_stats,
    randomize_labels,
)
from ..errors import ArgumentError, MarginBoundError, RunError
from ..network import init_mlp, load_checkpoint, save_checkpoint, zero_one_error
from ..trainer import TrainConfig, train
from .config import RunConfig
from .plots import emit_plot

EXTRA_COLUMNS = ["test_error", "train_error", "l2_sq", "l2_init_sq",
                 "spec_prod", "status"]
NORMS_COLUMNS = ["n", "seed", "l2_sq", "spec_prod", "l2_sq_per_n",
                 "spec_prod_per_n"]
SUMMARY_METRICS = ["total", "margin_loss", "effective_curvature", "l2_term",
                   "test_error"]

_STREAM_POOL = 1
_STREAM_SUBSAMPLE = 2
_STREAM_LABELS = 3
_STREAM_TEST = 4
_STREAM_INIT = 5
_STREAM_TRAIN = 6


@dataclass
class RunRow:
    """One (grid point, repeat) outcome; report is None when status != ok."""

    point_name: str
    point_value: float
    seed_index: int
    status: str
    report: object = None
    test_error: float = None
    train_error: float = None
    l2_sq: float = None
    l2_init_sq: float = None
    spec_prod: float = None
    wall: float = 0.0


@dataclass
class SweepResult:
    """Paths and rows produced by one sweep."""

    kind: str
    rows: list
    out_dir: Path
    csv_path: Path
    summary_path: Path
    figure_paths: list
    argmin_sigma2: float = None
    u_shaped: bool = None


def _derived_seed(base, *tags) -> int:
    state = np.random.SeedSequence([int(base)] + [int(t) for t in tags])
    return int(state.generate_state(1, dtype=np.uint64)[0])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class _SourcePool:
    """Loads file-backed train/test pools once per sweep."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._train = None
        self._test = None

    def train_pool(self):
        if self._train is None:
            cfg = self.cfg
            if cfg.source == "mnist":
                self._train = load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
            else:
                self._train = load_cifar10_bin(list(cfg.cifar_bin))
        return self._train

    def test_pool(self):
        if self._test is None:
            cfg = self.cfg
            if cfg.source == "mnist":
                if not (cfg.mnist_test_images and cfg.mnist_test_labels):
                    raise ArgumentError(
                        "mnist_test_images and mnist_test_labels are required"
                    )
                self._test = load_mnist_idx(cfg.mnist_test_images,
                                            cfg.mnist_test_labels)
            else:
                if not cfg.cifar_test_bin:
                    raise ArgumentError("cifar_test_bin is required")
                self._test = load_cifar10_bin(list(cfg.cifar_test_bin))
        return self._test


def _splits(cfg: RunConfig, pool: _SourcePool, n, r, gi, rep):
    """Build the normalized train/test pair for one run.

    The pipeline is: draw or load a pool, balanced-subsample n examples,
    randomize a fraction r of each class's labels, then normalize both
    splits by the training split's scalar statistics.
    """
    if cfg.source == "synthetic":
        if n % cfg.num_classes != 0:
            raise ArgumentError(
                f"n ({n}) must be divisible by num_classes ({cfg.num_classes})"
            )
        per_class = cfg.pool_per_class or 2 * (n // cfg.num_classes)
        train_pool = make_synthetic(
            cfg.num_classes, cfg.dim, per_class, cfg.separation, cfg.noise_std,
            _derived_seed(cfg.seed, _STREAM_POOL, gi, rep))
        test_ds = make_synthetic(
            cfg.num_classes, cfg.dim, cfg.test_per_class, cfg.separation,
            cfg.noise_std, _derived_seed(cfg.seed, _STREAM_TEST, gi, rep))
    else:
        train_pool = pool.train_pool()
        test_ds = pool.test_pool()
    train_ds = balanced_subsample(
        train_pool, n, _derived_seed(cfg.seed, _STREAM_SUBSAMPLE, gi, rep))
    if r > 0:
        train_ds = randomize_labels(
            train_ds, r, _derived_seed(cfg.seed, _STREAM_LABELS, gi, rep))
    mean, std = normalization_stats(train_ds)
    return (apply_normalization(train_ds, mean, std),
            apply_normalization(test_ds, mean, std))


def _trained_run(cfg: RunConfig, pool, n, r, gi, rep, out_dir: Path):
    """Train (or load) the network for one (grid point, repeat)."""
    train_ds, test_ds = _splits(cfg, pool, n, r, gi, rep)
    dims = cfg.layer_dims(train_ds.dim, train_ds.num_classes)
    params0 = init_mlp(dims, _derived_seed(cfg.seed, _STREAM_INIT, gi, rep),
                       cfg.init_scale)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    ckpt = ckpt_dir / f"n{n}_r{r:g}_rep{rep}.ckpt"
    if ckpt.exists():
        params = load_checkpoint(ckpt)
    else:
        tc = TrainConfig(
            epochs=cfg.epochs, learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size, init_scale=cfg.init_scale,
            seed=_derived_seed(cfg.seed, _STREAM_TRAIN, gi, rep))
        params, _ = train(train_ds, tc, init_params=params0)
        save_checkpoint(params, ckpt)
    return train_ds, test_ds, params0, params


def _evaluate(cfg: RunConfig, sigma2, train_ds, test_ds, params0, params):
    theta = params.flatten()
    theta0 = np.zeros_like(theta) if cfg.theta0_zero else params0.flatten()
    bc = BoundConfig(
        sigma2=sigma2, gamma=cfg.gamma, eta=cfg.eta, delta=cfg.delta,
        theta0=theta0, include_tail=cfg.include_tail,
        use_exact_kl=cfg.use_exact_kl)
    report = evaluate_bound(params, train_ds, bc)
    spec_prod, _ = spectral_norm_product(params, seed=0)
    return dict(
        report=report,
        test_error=zero_one_error(params, test_ds),
        train_error=zero_one_error(params, train_ds),
        l2_sq=float(theta @ theta),
        l2_init_sq=float(np.sum((theta - theta0) ** 2)),
        spec_prod=spec_prod,
    )


def _run_grid(cfg: RunConfig, kind, point_name, grid, fixed_n=None,
              fixed_r=None):
    """Shared driver: one trained+certified row per (grid point, repeat)."""
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = _SourcePool(cfg)
    rows = []
    for gi, value in enumerate(grid):
        n = int(value) if point_name == "n" else int(fixed_n)
        r = float(value) if point_name == "r" else float(fixed_r)
        for rep in range(cfg.repeats):
            start = time.perf_counter()
            row = RunRow(point_name, float(value), rep, "ok")
            try:
                parts = _trained_run(cfg, pool, n, r, gi, rep, out_dir)
                metrics = _evaluate(cfg, cfg.sigma2, *parts)
                for key, val in metrics.items():
                    setattr(row, key, val)
            except MarginBoundError as exc:
                row.status = f"error: {type(exc).__name__}: {exc}"
            row.wall = time.perf_counter() - start
            rows.append(row)
    return out_dir, rows


def _write_rows_csv(path: Path, rows, lead_columns):
    columns = lead_columns + ["seed"] + CSV_COLUMNS + EXTRA_COLUMNS
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            lead = [_fmt(row.point_value)] if lead_columns else []
            if row.report is None:
                body = [""] * len(CSV_COLUMNS)
                extras = ["", "", "", "", "", row.status]
            else:
                body = [_fmt(v) for v in row.report.csv_row()]
                extras = [_fmt(row.test_error), _fmt(row.train_error),
                          _fmt(row.l2_sq), _fmt(row.l2_init_sq),
                          _fmt(row.spec_prod), row.status]
            writer.writerow(lead + [str(row.seed_index)] + body + extras)


def _metric_value(row: RunRow, metric):
    if metric in EXTRA_COLUMNS:
        return getattr(row, metric)
    return getattr(row.report, metric)


def _write_summary_csv(path: Path, rows, point_name):
    points = sorted({row.point_value for row in rows})
    header = [point_name, "count"]
    for metric in SUMMARY_METRICS:
        header += [f"mean_{metric}", f"std_{metric}"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for value in points:
            ok = [r for r in rows
                  if r.point_value == value and r.status == "ok"]
            cells = [_fmt(value), str(len(ok))]
            for metric in SUMMARY_METRICS:
                vals = np.array([_metric_value(r, metric) for r in ok])
                if vals.size:
                    cells += [_fmt(float(vals.mean())),
                              _fmt(float(vals.std()))]
                else:
                    cells += ["", ""]
            writer.writerow(cells)


def _write_provenance(cfg: RunConfig, out_dir: Path, rows):
    (out_dir / "config.txt").write_text(cfg.provenance_text(), encoding="utf-8")
    with open(out_dir / "timings.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["point", "seed", "wall_seconds"])
        for row in rows:
            writer.writerow([_fmt(row.point_value), str(row.seed_index),
                             f"{row.wall:.6f}"])


def _render_figures(csv_path: Path, kind, metrics, out_dir: Path):
    figures = []
    for metric in metrics:
        out = out_dir / f"fig_{metric}.svg"
        figures.append(emit_plot(csv_path, kind, out_path=out, metric=metric))
    return figures


def _require_ok_rows(rows):
    """Fail the sweep outright when no run at all succeeded.

    The CSVs and provenance files are already on disk at this point, so
    the status column stays available for diagnosis.
    """
    if any(r.status == "ok" for r in rows):
        return
    first = next((r.status for r in rows if r.status != "ok"), "no rows")
    raise RunError(f"all {len(rows)} runs failed; first failure: {first}")


def sweep_random_labels(cfg: RunConfig) -> SweepResult:
    """Train and certify across cfg.r_grid at fixed n, cfg.repeats each.

    Rows are ordered by (r, seed). Per-row failures are recorded in the
    status column and the sweep continues.
    """
    grid = sorted(float(r) for r in cfg.r_grid)
    out_dir, rows = _run_grid(cfg, "random-labels", "r", grid, fixed_n=cfg.n)
    csv_path = out_dir / "results.csv"
    _write_rows_csv(csv_path, rows, ["r"])
    summary_path = out_dir / "summary.csv"
    _write_summary_csv(summary_path, rows, "r")
    _write_provenance(cfg, out_dir, rows)
    _require_ok_rows(rows)
    figures = _render_figures(
        csv_path, "random-labels",
        ["total", "margin_loss", "effective_curvature", "l2_term",
         "test_error"], out_dir)
    return SweepResult("random-labels", rows, out_dir, csv_path, summary_path,
                       figures)


def sweep_sample_size(cfg: RunConfig) -> SweepResult:
    """Train and certify across cfg.n_grid with clean labels (r = 0).

    results.csv carries the raw squared parameter norm and squared
    distance to initialization alongside every bound term; rows are
    ordered by (n, seed).
    """
    grid = sorted(int(n) for n in cfg.n_grid)
    out_dir, rows = _run_grid(cfg, "sample-size", "n", grid, fixed_r=0.0)
    csv_path = out_dir / "results.csv"
    _write_rows_csv(csv_path, rows, [])
    summary_path = out_dir / "summary.csv"
    _write_summary_csv(summary_path, rows, "n")
    _write_provenance(cfg, out_dir, rows)
    _require_ok_rows(rows)
    figures = _render_figures(csv_path, "sample-size",
                              ["total", "test_error"], out_dir)
    return SweepResult("sample-size", rows, out_dir, csv_path, summary_path,
                       figures)


def sweep_sigma(cfg: RunConfig) -> SweepResult:
    """Re-certify one trained network per repeat across a sigma^2 grid.

    Training happens once per repeat at (cfg.n, cfg.r); every grid value
    reuses those weights, so the sweep isolates the prior variance.
    Duplicate grid values are dropped. Reports the argmin sigma^2 of the
    mean total and whether the mean curve is U-shaped (an interior
    minimum).
    """
    grid = sorted(set(float(s) for s in cfg.sigma2_grid))
    if not grid:
        raise ArgumentError("sigma2_grid must be non-empty")
    for s in grid:
        if s <= 0:
            raise ArgumentError("sigma2 grid entries must be positive")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = _SourcePool(cfg)
    rows = []
    for rep in range(cfg.repeats):
        start = time.perf_counter()
        try:
            parts = _trained_run(cfg, pool, cfg.n, cfg.r, 0, rep, out_dir)
        except MarginBoundError as exc:
            wall = time.perf_counter() - start
            for value in grid:
                rows.append(RunRow("sigma2", value, rep,
                                   f"error: {type(exc).__name__}: {exc}",
                                   wall=wall))
            continue
        wall = time.perf_counter() - start
        for value in grid:
            start = time.perf_counter()
            row = RunRow("sigma2", value, rep, "ok")
            try:
                metrics = _evaluate(cfg, value, *parts)
                for key, val in metrics.items():
                    setattr(row, key, val)
            except MarginBoundError as exc:
                row.status = f"error: {type(exc).__name__}: {exc}"
            row.wall = wall + time.perf_counter() - start
            rows.append(row)
    rows.sort(key=lambda r: (r.point_value, r.seed_index))

    csv_path = out_dir / "results.csv"
    _write_rows_csv(csv_path, rows, [])
    summary_path = out_dir / "summary.csv"
    _write_summary_csv(summary_path, rows, "sigma2")
    _write_provenance(cfg, out_dir, rows)
    _require_ok_rows(rows)
    figures = _render_figures(csv_path, "sigma", ["total"], out_dir)

    means = []
    for value in grid:
        ok = [r.report.total for r in rows
              if r.point_value == value and r.status == "ok"]
        means.append(float(np.mean(ok)) if ok else np.inf)
    best = int(np.argmin(means))
    u_shaped = bool(0 < best < len(grid) - 1
                    and means[0] > means[best] < means[-1])
    return SweepResult("sigma", rows, out_dir, csv_path, summary_path,
                       figures, argmin_sigma2=grid[best], u_shaped=u_shaped)


def compare_norms(cfg: RunConfig) -> SweepResult:
    """Track the squared L2 norm against the spectral-norm product over n.

    Shares training runs (checkpoints) with sweep_sample_size on the same
    output directory. Writes norms.csv with exactly the columns
    n, seed, l2_sq, spec_prod, l2_sq_per_n, spec_prod_per_n, and renders
    both the raw and the per-n comparison figures.
    """
    grid = sorted(int(n) for n in cfg.n_grid)
    out_dir, rows = _run_grid(cfg, "norms", "n", grid, fixed_r=0.0)
    csv_path = out_dir / "norms.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(NORMS_COLUMNS)
        for row in rows:
            if row.status != "ok":
                continue
            n = int(row.point_value)
            writer.writerow([
                str(n), str(row.seed_index), _fmt(row.l2_sq),
                _fmt(row.spec_prod), _fmt(row.l2_sq / n),
                _fmt(row.spec_prod / n),
            ])
    summary_path = out_dir / "summary_norms.csv"
    _write_summary_csv(summary_path, rows, "n")
    _write_provenance(cfg, out_dir, rows)
    _require_ok_rows(rows)
    figures = [
        emit_plot(csv_path, "norms", out_path=out_dir / "fig_norms.svg"),
        emit_plot(csv_path, "norms-per-n",
                  out_path=out_dir / "fig_norms_per_n.svg"),
    ]
    return SweepResult("norms", rows, out_dir, csv_path, summary_path, figures)
