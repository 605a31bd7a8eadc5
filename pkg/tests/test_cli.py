"""Command-line interface: subcommands, outputs, and exit codes."""

import csv

import pytest

from marginbound.experiments.cli import main


def _run(argv):
    return main(argv)


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestTrainAndBound:
    def test_roundtrip(self, workdir, capsys):
        rc = _run(["train", "--synthetic", "2,6,20,6.0,1.0", "--epochs",
                   "40", "--width", "8", "--depth", "2", "--seed", "3",
                   "--out", "net.ckpt"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "checkpoint written to net.ckpt" in out
        assert (workdir / "net.ckpt").exists()

        rc = _run(["bound", "--synthetic", "2,6,20,6.0,1.0",
                   "--checkpoint", "net.ckpt", "--gamma", "1.0",
                   "--sigma2", "100", "--seed", "3", "--out", "bound.csv"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "total" in out
        with open(workdir / "bound.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert rows[0]["n"] == "40"
        assert float(rows[0]["total"]) > 0

    def test_bound_architecture_comes_from_checkpoint(self, workdir, capsys):
        _run(["train", "--synthetic", "2,6,20,6.0,1.0", "--epochs", "5",
              "--width", "4", "--depth", "2", "--seed", "3", "--out",
              "net.ckpt"])
        capsys.readouterr()
        # No --width here: the checkpoint's own shape must be used.
        rc = _run(["bound", "--synthetic", "2,6,20,6.0,1.0",
                   "--checkpoint", "net.ckpt", "--sigma2", "100",
                   "--seed", "3"])
        assert rc == 0

    def test_label_randomization_flag_changes_dataset(self, workdir,
                                                      capsys):
        _run(["train", "--synthetic", "2,6,20,6.0,1.0", "--epochs", "400",
              "--width", "8", "--depth", "2", "--seed", "3", "--out",
              "net.ckpt"])
        capsys.readouterr()

        def train_error(r):
            rc = _run(["bound", "--synthetic", "2,6,20,6.0,1.0",
                       "--checkpoint", "net.ckpt", "--sigma2", "100",
                       "--seed", "3", "--r", r])
            assert rc == 0
            out = capsys.readouterr().out
            line = next(l for l in out.splitlines()
                        if l.startswith("train_error="))
            return float(line.split("=")[1])

        # The net fits the clean labels; half-randomized labels must
        # show up as a worse error on the same checkpoint.
        assert train_error("0.0") < train_error("0.5")

    def test_missing_checkpoint_is_exit_3(self, workdir, capsys):
        rc = _run(["bound", "--synthetic", "2,6,20,6.0,1.0",
                   "--checkpoint", "missing.ckpt", "--sigma2", "100"])
        err = capsys.readouterr().err
        assert rc == 3
        assert "data error" in err


class TestSweepCommands:
    def test_random_labels_sweep(self, workdir, capsys):
        rc = _run(["sweep-random-labels", "--synthetic", "2,6,10,6.0,1.0",
                   "--n", "20", "--r-grid", "0,0.5", "--repeats", "1",
                   "--epochs", "10", "--width", "8", "--out", "rl"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "4 rows" not in out  # 2 points x 1 repeat = 2 rows
        assert "2 rows" in out
        assert (workdir / "rl" / "results.csv").exists()
        assert (workdir / "rl" / "fig_total.svg").exists()

    def test_all_failed_sweep_is_exit_4(self, workdir, capsys):
        rc = _run(["sweep-random-labels", "--synthetic", "3,6,10,6.0,1.0",
                   "--n", "20", "--r-grid", "0", "--repeats", "1",
                   "--epochs", "5", "--out", "bad"])
        err = capsys.readouterr().err
        assert rc == 4
        assert "run failure" in err

    def test_sigma_sweep_reports_argmin(self, workdir, capsys):
        rc = _run(["sweep-sigma", "--synthetic", "2,6,10,6.0,1.0",
                   "--n", "20", "--sigma2-grid", "1,100", "--repeats", "1",
                   "--epochs", "10", "--width", "8", "--out", "sg"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "argmin sigma2" in out

    def test_compare_norms(self, workdir, capsys):
        rc = _run(["compare-norms", "--synthetic", "2,6,20,6.0,1.0",
                   "--n-grid", "20,40", "--repeats", "1", "--epochs", "10",
                   "--width", "8", "--out", "cn"])
        assert rc == 0
        header = (workdir / "cn" / "norms.csv").read_text().split("\n")[0]
        assert header == "n,seed,l2_sq,spec_prod,l2_sq_per_n,spec_prod_per_n"


class TestConcCheck:
    def test_single_sim(self, workdir, capsys):
        rc = _run(["conc-check", "--sim", "mds-linear", "--trials",
                   "10000", "--out", "conc"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "mds-linear: all_passed=true" in out
        assert (workdir / "conc" / "mds-linear.csv").exists()
        assert (workdir / "conc" / "fig_mds-linear.svg").exists()

    def test_trials_floor_is_exit_2(self, workdir, capsys):
        rc = _run(["conc-check", "--sim", "mds-linear", "--trials", "10"])
        err = capsys.readouterr().err
        assert rc == 2
        assert "argument error" in err


class TestPlotCommand:
    def test_replot_from_csv(self, workdir, capsys):
        _run(["sweep-random-labels", "--synthetic", "2,6,10,6.0,1.0",
              "--n", "20", "--r-grid", "0,0.5", "--repeats", "1",
              "--epochs", "5", "--width", "8", "--out", "rl"])
        capsys.readouterr()
        rc = _run(["plot", "--csv", "rl/results.csv", "--kind",
                   "random-labels", "--metric", "total", "--out",
                   "re.svg"])
        assert rc == 0
        assert (workdir / "re.svg").exists()

    def test_unknown_kind_is_exit_2(self, workdir, capsys):
        (workdir / "x.csv").write_text("r,seed,total,status\n0,0,1,ok\n")
        rc = _run(["plot", "--csv", "x.csv", "--kind", "wrong"])
        err = capsys.readouterr().err
        assert rc == 2
        assert "argument error" in err


class TestParser:
    def test_no_command_is_exit_2(self, capsys):
        rc = _run([])
        assert rc == 2

    def test_unknown_flag_is_exit_2(self, capsys):
        rc = _run(["train", "--no-such-flag"])
        assert rc == 2

    def test_bad_synthetic_spec_is_exit_2(self, workdir, capsys):
        rc = _run(["train", "--synthetic", "2,6", "--epochs", "1"])
        assert rc == 2
