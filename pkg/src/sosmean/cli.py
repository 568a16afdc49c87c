"""Command-line entry points.

Subcommands: gen (sample synthesis), corrupt (adversarial contamination),
estimate (run one estimator), verify-lb and verify-toolkit (exact
verification of the lower-bound constructions and the inequality suite;
both exit nonzero on any violation), sweep (grid experiments).

Data files are CSV with header x0,...,x{d-1}, one row per sample, plus
a JSON sidecar (same stem, .json) carrying spec, seed, and mask data.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from sosmean import bench, certify
from sosmean.adversary import (
    corrupted_from_arrays,
    corrupted_to_dict,
    corrupt as corrupt_fn,
    parse_strategy,
)
from sosmean.distributions import (
    SampleSet,
    parse_spec,
    sample as sample_fn,
    spec_from_dict,
    spec_to_dict,
)
from sosmean.estimators import (
    EstimationError,
    coordinate_median,
    gaussian_projection_1d,
    geometric_median,
    sample_mean,
    sos_mean,
)


def _write_csv(path: Path, data: np.ndarray) -> None:
    d = data.shape[1]
    header = ",".join(f"x{j}" for j in range(d))
    lines = [header]
    for row in data:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


@click.group()
def main():
    """Robust mean estimation via moment relaxations."""


@main.command("gen")
@click.option("--dist", "dist_str", required=True, help="spec string, e.g. gaussian:mean=0")
@click.option("--n", type=int, required=True)
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def gen_cmd(dist_str: str, n: int, d: int, seed: int, out: Path):
    """Draw n i.i.d. samples and write CSV plus JSON sidecar."""
    spec = parse_spec(dist_str, d=d)
    s = sample_fn(spec, n, seed)
    _write_csv(out, s.data)
    sidecar = {
        "spec": spec_to_dict(spec),
        "seed": seed,
        "n": n,
        "d": s.d,
        "true_mean": [float(x) for x in s.true_mean],
        "empirical_mean": [float(x) for x in s.empirical_mean],
    }
    _sidecar(out).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    click.echo(f"wrote {out} ({s.n} x {s.d}) and {_sidecar(out)}")


@main.command("corrupt")
@click.option("--in", "in_path", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--eps", type=float, required=True)
@click.option("--strategy", "strategy_str", default="identity", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def corrupt_cmd(in_path: Path, eps: float, strategy_str: str, seed: int, out: Path):
    """Apply a contamination strategy to a generated sample file."""
    data = _read_csv(in_path)
    meta = json.loads(_sidecar(in_path).read_text())
    origin = SampleSet(
        data=data,
        true_mean=np.asarray(meta["true_mean"], dtype=float),
        empirical_mean=data.mean(axis=0),
        seed=int(meta.get("seed", 0)),
        spec=spec_from_dict(meta["spec"]) if "spec" in meta else None,
    )
    strategy = parse_strategy(strategy_str, d=data.shape[1])
    zset = corrupt_fn(origin, eps, strategy, seed)
    _write_csv(out, zset.z)
    _sidecar(out).write_text(
        json.dumps(corrupted_to_dict(zset), indent=2, sort_keys=True)
    )
    click.echo(
        f"wrote {out}: {zset.num_corrupted()} of {zset.n} rows corrupted "
        f"(eps={eps})"
    )


@main.command("estimate")
@click.option("--in", "in_path", type=click.Path(path_type=Path, exists=True), required=True)
@click.option(
    "--estimator",
    type=click.Choice(["sos", "mean", "median", "geomedian", "gauss1d"]),
    required=True,
)
@click.option("--eps", type=float, default=None, help="override sidecar epsilon")
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--k", type=click.Choice(["2", "4"]), default="2", show_default=True)
@click.option("--r", type=click.Choice(["1", "2", "3"]), default="2", show_default=True)
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.option("--max-iter", type=int, default=5000, show_default=True)
@click.option("--trace", type=click.Path(path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def estimate_cmd(in_path, estimator, eps, sigma, k, r, tol, max_iter, trace, out):
    """Estimate the mean of a corrupted sample file; write a JSON report."""
    z = _read_csv(in_path)
    payload = json.loads(_sidecar(in_path).read_text())
    if eps is not None:
        payload["epsilon"] = eps
    # the original values of corrupted rows are not in the file; the z rows
    # stand in for them, which the estimators never read through the mask
    zset = corrupted_from_arrays(z, z.copy(), payload)
    origin_mean = np.asarray(payload["origin_empirical_mean"], dtype=float)
    if estimator == "sos":
        try:
            rep = sos_mean(
                zset,
                sigma=sigma,
                k=int(k),
                r=int(r),
                tol=tol,
                max_iter=max_iter,
                trace_path=str(trace) if trace is not None else None,
            )
        except EstimationError as exc:
            rep = getattr(exc, "report", None)
            if rep is None:
                click.echo(f"estimation failed: {exc}", err=True)
                sys.exit(2)
    elif estimator == "mean":
        rep = sample_mean(zset)
    elif estimator == "median":
        rep = coordinate_median(zset)
    elif estimator == "geomedian":
        rep = geometric_median(zset)
    else:
        if z.shape[1] != 1:
            click.echo("gauss1d needs 1-D data", err=True)
            sys.exit(2)
        rep = gaussian_projection_1d(
            z[:, 0], origin_mean=float(origin_mean[0])
        )
    error = float(np.linalg.norm(rep.mu_hat - origin_mean))
    report = {
        "estimator": rep.estimator,
        "mu_hat": [float(x) for x in rep.mu_hat],
        "error_vs_origin_empirical_mean": error,
        "seconds": rep.seconds,
        "status": rep.status,
        "residual_eq": rep.residual_eq,
        "residual_psd": rep.residual_psd,
        "details": {
            key: val
            for key, val in rep.details.items()
            if isinstance(val, (int, float, str, bool))
        },
    }
    Path(out).write_text(json.dumps(report, indent=2, sort_keys=True))
    click.echo(f"{rep.estimator}: mu_hat={rep.mu_hat} error={error:.6g}")


@main.command("verify-lb")
@click.option(
    "--family",
    type=click.Choice(["moment", "gaussian", "gauss-vs-cov"]),
    required=True,
)
@click.option("--eps", type=float, required=True)
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--regime", type=click.Choice(["large", "small"]), default="large")
@click.option("--out", type=click.Path(path_type=Path), default=None)
def verify_lb_cmd(family, eps, k, regime, out):
    """Rebuild a lower-bound pair and verify its closed forms exactly."""
    try:
        if family == "moment":
            pair = certify.lb_bounded_moment_pair(eps, k)
        elif family == "gaussian":
            pair = certify.lb_gaussian_pair(eps)
        else:
            pair = certify.lb_gauss_vs_bounded_cov(eps, regime)
    except (ValueError, AssertionError) as exc:
        click.echo(f"FAIL: {exc}", err=True)
        sys.exit(1)
    tv, overlap = certify.tv_distance(pair.d1, pair.d2)
    payload = {
        "family": pair.family,
        "eps": pair.eps,
        "k": pair.k,
        "tv": tv,
        "overlap": overlap,
        "mean_gap": pair.mean_gap,
        "kth_central_moment_d2": pair.kth_central_moment_d2,
        "checks": pair.checks,
        "d1": spec_to_dict(pair.d1),
        "d2": spec_to_dict(pair.d2),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is not None:
        Path(out).write_text(text)
    click.echo(text)


@main.command("verify-toolkit")
@click.option("--trials", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def verify_toolkit_cmd(trials, seed, out):
    """Run the randomized inequality suite; nonzero exit on any violation."""
    report = certify.toolkit_suite(trials=trials, seed=seed)
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True)
    if out is not None:
        Path(out).write_text(text)
    click.echo(text)
    if not report.all_ok:
        click.echo("TOOLKIT VIOLATIONS FOUND", err=True)
        sys.exit(1)


@main.command("sweep")
@click.option("--config", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def sweep_cmd(config, out):
    """Run an eps sweep from a key-value config file."""
    cfg = bench.parse_config_file(config)
    report = bench.run_sweep(cfg)
    csv_path, summary_path = bench.write_outputs(report, out)
    click.echo(f"wrote {csv_path} and {summary_path}")
    failed = sum(1 for r in report.rows if r.status != "ok")
    if failed:
        click.echo(f"{failed} rows did not fully converge", err=True)


if __name__ == "__main__":
    main()
