"""Static SVG figures rendered from sweep and simulation CSV files.

Rendering never needs a display (the Agg backend is forced) and the bytes
are deterministic for fixed input: the SVG id hash salt, figure geometry,
fonts, and metadata are all pinned, and no timestamps are embedded. Each
series' marker line carries an SVG group id "series-<name>", so the data
marks of a series can be located (and counted) in the output.
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from ..errors import ArgumentError  # noqa: E402

_RC = {
    "svg.hashsalt": "marginbound",
    "svg.fonttype": "path",
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

KIND_SPECS = {
    "random-labels": {
        "x": "r", "xlabel": "label randomization fraction",
        "default_metric": "total",
    },
    "sample-size": {
        "x": "n", "xlabel": "training set size",
        "default_metric": "total",
    },
    "sigma": {
        "x": "sigma2", "xlabel": "prior variance sigma^2",
        "default_metric": "total", "logx": True,
    },
    "norms": {
        "x": "n", "xlabel": "training set size",
        "series": ["l2_sq", "spec_prod"],
    },
    "norms-per-n": {
        "x": "n", "xlabel": "training set size",
        "series": ["l2_sq_per_n", "spec_prod_per_n"],
    },
    "concentration": {
        "x": "threshold", "xlabel": "threshold",
        "series": ["empirical", "bound"],
    },
}

_MARKERS = ["o", "s", "^", "d"]


def _read_rows(csv_path):
    with open(str(csv_path), "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fieldnames = reader.fieldnames or []
        rows = list(reader)
    return fieldnames, rows


def emit_plot(csv_path, kind, out_path=None, metric=None) -> Path:
    """Render one figure from a results CSV to a static SVG file.

    Args:
        csv_path: CSV produced by a sweep, compare_norms, or a
            concentration simulation.
        kind: one of "random-labels", "sample-size", "sigma", "norms",
            "norms-per-n", "concentration"; picks the x column and the
            default series.
        out_path: target file; defaults to the CSV's name with a
            _<kind>[_<metric>].svg suffix.
        metric: y column for the single-series kinds (default "total").

    Returns:
        Path of the written SVG. Nothing is written when the CSV has no
        usable data rows; that raises ArgumentError instead.

    Each series shows the per-x mean with a +-std error bar across
    repeats (the concentration kind shows the empirical frequency with
    its standard error against the theoretical bound).
    """
    csv_path = Path(csv_path)
    if kind not in KIND_SPECS:
        raise ArgumentError(f"unknown plot kind {kind!r}")
    spec = KIND_SPECS[kind]
    series = spec.get("series")
    if series is None:
        series = [metric or spec["default_metric"]]
    elif metric is not None:
        raise ArgumentError(f"kind {kind!r} has a fixed series list")

    fieldnames, raw_rows = _read_rows(csv_path)
    x_col = spec["x"]
    needed = [x_col] + series + (["stderr"] if kind == "concentration" else [])
    for col in needed:
        if col not in fieldnames:
            raise ArgumentError(f"{csv_path}: missing column {col!r}")
    rows = [r for r in raw_rows
            if r.get("status", "ok") == "ok" and r[x_col] != ""
            and all(r[s] != "" for s in series)]
    if not rows:
        raise ArgumentError(f"{csv_path}: no data rows to plot")

    if out_path is None:
        suffix = f"_{kind}" + (f"_{series[0]}" if len(series) == 1 else "")
        out_path = csv_path.with_name(csv_path.stem + suffix + ".svg")
    out_path = Path(out_path)

    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for idx, name in enumerate(series):
            grouped = {}
            for row in rows:
                grouped.setdefault(float(row[x_col]), []).append(row)
            xs = sorted(grouped)
            if kind == "concentration":
                means = [float(grouped[x][0][name]) for x in xs]
                errs = ([float(grouped[x][0]["stderr"]) for x in xs]
                        if name == "empirical" else None)
            else:
                values = [[float(r[name]) for r in grouped[x]] for x in xs]
                means = [sum(v) / len(v) for v in values]
                errs = [_std(v) for v in values]
            container = ax.errorbar(
                xs, means, yerr=errs, marker=_MARKERS[idx % len(_MARKERS)],
                capsize=3, label=name)
            container.lines[0].set_gid(f"series-{name}")
        if spec.get("logx"):
            ax.set_xscale("log")
        ax.set_xlabel(spec["xlabel"])
        ax.set_ylabel(series[0] if len(series) == 1 else "value")
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out_path


def _std(values) -> float:
    mean = sum(values) / len(values)
    return (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
