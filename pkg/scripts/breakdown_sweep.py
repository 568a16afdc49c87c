#!/usr/bin/env python3
"""Sweep the corruption rate toward 1/2 and compare estimators.

Produces report.csv/summary.json under --out and prints the median error
table with the theory curve.  Small by default; crank n/trials as needed.

    python scripts/breakdown_sweep.py --out /tmp/sweep --trials 10
"""

import argparse
import time

from sosmean.adversary import ClusterAtScaledSpike
from sosmean.bench import ExperimentConfig, fit_rate, run_sweep, write_outputs
from sosmean.certify import theory_error_rate
from sosmean.distributions import BoundedCovariance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=24)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1000)
    ap.add_argument("--eps", default="0.1,0.2,0.3,0.4,0.45")
    args = ap.parse_args()

    cfg = ExperimentConfig(
        dist=BoundedCovariance(mean=(0.0, 0.0), sigma=1.0),
        strategy=ClusterAtScaledSpike(k=2),
        eps_grid=tuple(float(e) for e in args.eps.split(",")),
        n=args.n,
        d=2,
        trials=args.trials,
        base_seed=args.seed,
        sigma=1.0,
        tol=1e-3,
        max_iter=1500,
        estimators=("sos", "mean", "median"),
        single_precision=True,
    )
    t0 = time.perf_counter()
    report = run_sweep(cfg)
    csv_path, summary_path = write_outputs(report, args.out)
    print(f"wrote {csv_path} and {summary_path} in {time.perf_counter()-t0:.0f}s\n")
    print(f"{'eps':>6} {'sos':>8} {'mean':>8} {'median':>8} {'theory':>8}")
    for eps in cfg.eps_grid:
        meds = {est: report.median_errors(est)[eps] for est in cfg.estimators}
        print(
            f"{eps:>6.2f} {meds['sos']:>8.3f} {meds['mean']:>8.3f} "
            f"{meds['median']:>8.3f} {theory_error_rate(eps, 2):>8.3f}"
        )
    if len(cfg.eps_grid) > 1 and cfg.trials >= 10:
        fit = fit_rate(report, "sos")
        print(f"\nrate fit vs sqrt(eps/(1-2eps)): {fit.verdict}")


if __name__ == "__main__":
    main()
