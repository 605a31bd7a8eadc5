"""Command-line interface.

Subcommands: train, bound, sweep-random-labels, sweep-sample-size,
sweep-sigma, compare-norms, conc-check, plot. Exit codes: 0 success,
2 argument error, 3 data error, 4 run failure.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .. import concentration
from ..bound import CSV_COLUMNS, BoundConfig, evaluate_bound
from ..dataset import (
    load_cifar10_bin,
    load_mnist_idx,
    make_synthetic,
    normalize,
    randomize_labels,
)
from ..errors import ArgumentError, DataError, MarginBoundError
from ..network import init_mlp, load_checkpoint, save_checkpoint, zero_one_error
from ..trainer import TrainConfig, train
from .config import load_config_file, make_config
from .plots import emit_plot
from .sweeps import (
    _STREAM_LABELS,
    _derived_seed,
    compare_norms,
    sweep_random_labels,
    sweep_sample_size,
    sweep_sigma,
)

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_DATA = 3
EXIT_RUN = 4


def _parse_synthetic(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(
            "--synthetic expects k,dim,per-class,sep,noise")
    try:
        return (int(parts[0]), int(parts[1]), int(parts[2]),
                float(parts[3]), float(parts[4]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_grid(text):
    return tuple(int(s) for s in text.split(","))


def _float_grid(text):
    return tuple(float(s) for s in text.split(","))


def _add_data_flags(sub):
    sub.add_argument("--synthetic", type=_parse_synthetic, metavar="K,D,M,S,N",
                     help="synthetic source: k,dim,per-class,sep,noise")
    sub.add_argument("--mnist-images", help="IDX image file")
    sub.add_argument("--mnist-labels", help="IDX label file")
    sub.add_argument("--mnist-test-images", help="IDX test image file")
    sub.add_argument("--mnist-test-labels", help="IDX test label file")
    sub.add_argument("--cifar-bin", action="append", default=None,
                     help="CIFAR-10 binary batch (repeatable)")
    sub.add_argument("--cifar-test-bin", action="append", default=None,
                     help="CIFAR-10 binary test batch (repeatable)")


def _add_common_flags(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--depth", type=int)
    sub.add_argument("--width", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float, dest="learning_rate")
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--init-scale", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--repeats", type=int)
    sub.add_argument("--out")
    sub.add_argument("--sigma2", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--eta", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--theta0-zero", action="store_true", default=None)
    sub.add_argument("--exact-kl", action="store_true", default=None)
    sub.add_argument("--no-tail", action="store_true", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="marginbound",
        description="Train small ReLU networks and certify them with "
                    "curvature-based margin bounds.")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("train", "train one network and save a checkpoint"),
        ("bound", "evaluate the certificate for a trained checkpoint"),
        ("sweep-random-labels", "bound terms across label randomization"),
        ("sweep-sample-size", "bound terms across training set sizes"),
        ("sweep-sigma", "bound terms across prior variances"),
        ("compare-norms", "L2 norm vs spectral-norm product across n"),
    ):
        sub = subs.add_parser(name, help=helptext)
        _add_common_flags(sub)
        _add_data_flags(sub)
        if name in ("train", "bound", "sweep-random-labels", "sweep-sigma"):
            sub.add_argument("--n", type=int)
            sub.add_argument("--r", type=float)
        if name == "sweep-random-labels":
            sub.add_argument("--r-grid", type=_float_grid, metavar="R1,R2,...")
        if name in ("sweep-sample-size", "compare-norms"):
            sub.add_argument("--n-grid", type=_int_grid, metavar="N1,N2,...")
        if name == "sweep-sigma":
            sub.add_argument("--sigma2-grid", type=_float_grid,
                             metavar="S1,S2,...")
        if name == "bound":
            sub.add_argument("--checkpoint", required=True,
                             help="trained network checkpoint")

    conc = subs.add_parser("conc-check",
                           help="Monte-Carlo checks of the tail bounds")
    conc.add_argument("--sim", default="all",
                      choices=["all", "mds-linear", "network-mask-linear",
                               "masked-quadratic", "isotropic-quadratic"])
    conc.add_argument("--trials", type=int, default=10_000)
    conc.add_argument("--seed", type=int, default=0)
    conc.add_argument("--sigma2", type=float, default=1.0)
    conc.add_argument("--out", default="conc")

    plot = subs.add_parser("plot", help="render a figure from a results CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--kind", required=True)
    plot.add_argument("--metric")
    plot.add_argument("--out")
    return parser


_CLI_CONFIG_KEYS = [
    "depth", "width", "epochs", "learning_rate", "batch_size", "init_scale",
    "seed", "repeats", "out", "sigma2", "gamma", "eta", "delta", "n", "r",
    "mnist_images", "mnist_labels", "mnist_test_images", "mnist_test_labels",
]


def _config_from_args(args):
    file_values = load_config_file(args.config) if args.config else {}
    cli = {}
    for key in _CLI_CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cli[key] = value
    if getattr(args, "theta0_zero", None):
        cli["theta0_zero"] = True
    if getattr(args, "exact_kl", None):
        cli["use_exact_kl"] = True
    if getattr(args, "no_tail", None):
        cli["include_tail"] = False
    if getattr(args, "r_grid", None) is not None:
        cli["r_grid"] = args.r_grid
    if getattr(args, "n_grid", None) is not None:
        cli["n_grid"] = args.n_grid
    if getattr(args, "sigma2_grid", None) is not None:
        cli["sigma2_grid"] = args.sigma2_grid
    if getattr(args, "synthetic", None) is not None:
        k, dim, per_class, sep, noise = args.synthetic
        cli.update(source="synthetic", num_classes=k, dim=dim,
                   pool_per_class=per_class, separation=sep, noise_std=noise)
    elif getattr(args, "mnist_images", None):
        cli["source"] = "mnist"
    elif getattr(args, "cifar_bin", None):
        cli["source"] = "cifar10"
        cli["cifar_bin"] = tuple(args.cifar_bin)
        if getattr(args, "cifar_test_bin", None):
            cli["cifar_test_bin"] = tuple(args.cifar_test_bin)
    return make_config(file_values, cli)


def _load_cli_dataset(cfg):
    """Full dataset for the single-run commands (train / bound)."""
    if cfg.source == "mnist":
        ds = load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
    elif cfg.source == "cifar10":
        ds = load_cifar10_bin(list(cfg.cifar_bin))
    else:
        per_class = cfg.pool_per_class or max(cfg.n // cfg.num_classes, 1)
        ds = make_synthetic(cfg.num_classes, cfg.dim, per_class,
                            cfg.separation, cfg.noise_std, cfg.seed)
    if cfg.r > 0:
        ds = randomize_labels(ds, cfg.r,
                              _derived_seed(cfg.seed, _STREAM_LABELS))
    return normalize(ds)


def _cmd_train(args):
    cfg = _config_from_args(args)
    ds = _load_cli_dataset(cfg)
    dims = cfg.layer_dims(ds.dim, ds.num_classes)
    tc = TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                     batch_size=cfg.batch_size, init_scale=cfg.init_scale,
                     seed=cfg.seed)
    params, history = train(ds, tc, layer_dims=dims)
    out = Path(cfg.out if cfg.out != "runs" else "model.ckpt")
    if out.is_dir():
        out = out / "model.ckpt"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out)
    final_loss = history.epoch_losses[-1] if history.epoch_losses else float("nan")
    final_err = history.epoch_errors[-1] if history.epoch_errors else float("nan")
    print(f"trained {cfg.epochs} epochs on n={ds.n}: "
          f"loss={final_loss:.6g} train_error={final_err:.6g}")
    print(f"checkpoint written to {out}")
    return EXIT_OK


def _cmd_bound(args):
    cfg = _config_from_args(args)
    params = load_checkpoint(args.checkpoint)
    ds = _load_cli_dataset(cfg)
    theta0 = None
    if not cfg.theta0_zero:
        # The checkpoint knows its own shape; the config may not match it.
        theta0 = init_mlp(params.layer_dims, cfg.seed,
                          cfg.init_scale).flatten()
    bc = BoundConfig(sigma2=cfg.sigma2, gamma=cfg.gamma, eta=cfg.eta,
                     delta=cfg.delta, theta0=theta0,
                     include_tail=cfg.include_tail,
                     use_exact_kl=cfg.use_exact_kl)
    report = evaluate_bound(params, ds, bc)
    print(report.text())
    print(f"train_error={zero_one_error(params, ds):.6g}")
    if cfg.out != "runs":
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            writer.writerow([repr(v) if isinstance(v, float) else str(v)
                             for v in report.csv_row()])
        print(f"report written to {out}")
    return EXIT_OK


def _print_sweep(result):
    print(f"{result.kind}: {len(result.rows)} rows -> {result.csv_path}")
    failed = [r for r in result.rows if r.status != "ok"]
    if failed:
        print(f"{len(failed)} rows failed; see the status column")
    for fig in result.figure_paths:
        print(f"figure written to {fig}")
    if result.argmin_sigma2 is not None:
        print(f"argmin sigma2 = {result.argmin_sigma2:g} "
              f"(u_shaped={str(result.u_shaped).lower()})")
    return EXIT_OK


def _conc_reports(args):
    rng_net = init_mlp([2, 4, 2], seed=7)
    mask_net = init_mlp([2, 8, 2], seed=11)
    x = np.array([0.9, -0.4])
    trials, seed, sigma2 = args.trials, args.seed, args.sigma2
    tau = np.array([1.0, 2.0, 3.0, 4.0])
    gamma = np.array([2.0, 3.0, 4.0, 6.0])
    reports = {}
    if args.sim in ("all", "mds-linear"):
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(16)
        scale = float(np.linalg.norm(u))
        reports["mds-linear"] = concentration.simulate_mds_linear(
            16, u, 1.0, trials, tau * scale, seed)
    if args.sim in ("all", "network-mask-linear"):
        rng = np.random.default_rng(seed + 1)
        u = rng.standard_normal(rng_net.num_params)
        scale = float(np.linalg.norm(u)) * np.sqrt(sigma2)
        reports["network-mask-linear"] = concentration.simulate_network_mask_linear(
            rng_net, x, u, sigma2, trials, tau * scale, seed)
    if args.sim in ("all", "masked-quadratic"):
        psd = concentration.geometric_spectrum_psd(mask_net.num_params, seed=3)
        reports["masked-quadratic"] = concentration.simulate_masked_quadratic(
            mask_net, x, psd, sigma2, trials, gamma, seed)
    if args.sim in ("all", "isotropic-quadratic"):
        psd = concentration.geometric_spectrum_psd(16, seed=5)
        reports["isotropic-quadratic"] = concentration.simulate_isotropic_quadratic(
            sigma2, psd, trials, gamma, seed)
    return reports


def _cmd_conc(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, report in _conc_reports(args).items():
        csv_path = out_dir / f"{name}.csv"
        csv_path.write_text(report.csv_text(), encoding="utf-8")
        fig = emit_plot(csv_path, "concentration",
                        out_path=out_dir / f"fig_{name}.svg")
        print(f"{name}: all_passed={str(report.all_passed).lower()} "
              f"-> {csv_path}")
        print(f"figure written to {fig}")
    return EXIT_OK


def _dispatch(args):
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "bound":
        return _cmd_bound(args)
    if args.command == "sweep-random-labels":
        return _print_sweep(sweep_random_labels(_config_from_args(args)))
    if args.command == "sweep-sample-size":
        return _print_sweep(sweep_sample_size(_config_from_args(args)))
    if args.command == "sweep-sigma":
        return _print_sweep(sweep_sigma(_config_from_args(args)))
    if args.command == "compare-norms":
        return _print_sweep(compare_norms(_config_from_args(args)))
    if args.command == "conc-check":
        return _cmd_conc(args)
    if args.command == "plot":
        out = emit_plot(args.csv, args.kind, out_path=args.out,
                        metric=args.metric)
        print(f"figure written to {out}")
        return EXIT_OK
    raise ArgumentError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ArgumentError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MarginBoundError as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return EXIT_RUN


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
