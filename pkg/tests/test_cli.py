import json

import numpy as np
import pytest
from click.testing import CliRunner

from sosmean.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def test_gen_corrupt_estimate_round_trip(tmp_path, runner):
    data = tmp_path / "clean.csv"
    res = runner.invoke(
        main,
        ["gen", "--dist", "gaussian:mean=0", "--n", "12", "--d", "1",
         "--seed", "3", "--out", str(data)],
    )
    assert res.exit_code == 0, res.output
    sidecar = json.loads((tmp_path / "clean.json").read_text())
    assert sidecar["n"] == 12 and sidecar["d"] == 1

    bad = tmp_path / "bad.csv"
    res = runner.invoke(
        main,
        ["corrupt", "--in", str(data), "--eps", "0.25", "--strategy",
         "replace-point:loc=40", "--seed", "5", "--out", str(bad)],
    )
    assert res.exit_code == 0, res.output
    meta = json.loads((tmp_path / "bad.json").read_text())
    assert sum(1 - m for m in meta["mask_wstar"]) == 3

    for est in ("mean", "median", "geomedian", "gauss1d"):
        out = tmp_path / f"report_{est}.json"
        res = runner.invoke(
            main,
            ["estimate", "--in", str(bad), "--estimator", est, "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        payload = json.loads(out.read_text())
        assert payload["estimator"] in (est, "gauss1d")
        assert payload["error_vs_origin_empirical_mean"] >= 0

    out = tmp_path / "report_sos.json"
    res = runner.invoke(
        main,
        ["estimate", "--in", str(bad), "--estimator", "sos", "--sigma", "1.3",
         "--tol", "1e-3", "--max-iter", "4000", "--out", str(out)],
    )
    assert res.exit_code == 0, res.output
    payload = json.loads(out.read_text())
    assert payload["error_vs_origin_empirical_mean"] < 2.0


def test_gen_rejects_bad_spec(tmp_path, runner):
    res = runner.invoke(
        main,
        ["gen", "--dist", "two-point:base=0,spike=1,prob=2", "--n", "5",
         "--out", str(tmp_path / "x.csv")],
    )
    assert res.exit_code != 0


def test_verify_lb_families(runner):
    res = runner.invoke(main, ["verify-lb", "--family", "moment", "--eps", "0.3", "--k", "4"])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output)
    assert payload["tv"] == pytest.approx(0.6, abs=1e-12)

    res = runner.invoke(main, ["verify-lb", "--family", "gaussian", "--eps", "0.45"])
    assert res.exit_code == 0
    res = runner.invoke(
        main,
        ["verify-lb", "--family", "gauss-vs-cov", "--eps", "0.05", "--regime", "small"],
    )
    assert res.exit_code == 0

    # vacuous-regime request exits nonzero
    res = runner.invoke(main, ["verify-lb", "--family", "gaussian", "--eps", "0.2"])
    assert res.exit_code == 1


def test_verify_toolkit_cli(tmp_path, runner):
    out = tmp_path / "toolkit.json"
    res = runner.invoke(
        main, ["verify-toolkit", "--trials", "300", "--seed", "2", "--out", str(out)]
    )
    assert res.exit_code == 0, res.output
    payload = json.loads(out.read_text())
    assert all(v["violations"] == 0 for v in payload.values())


def test_sweep_cli(tmp_path, runner):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(
        "dist = gaussian:mean=0\n"
        "strategy = replace-point:loc=25\n"
        "eps_grid = 0.0,0.2\n"
        "n = 8\nd = 1\ntrials = 2\nbase_seed = 9\nsigma = 1.4\n"
        "tol = 1e-3\nmax_iter = 2000\nestimators = mean,median\nworkers = 1\n"
    )
    out_dir = tmp_path / "out"
    res = runner.invoke(main, ["sweep", "--config", str(cfg), "--out", str(out_dir)])
    assert res.exit_code == 0, res.output
    lines = (out_dir / "report.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 2 * 2 * 2
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["failed_rows"] == 0
