"""Experiment orchestration: eps sweeps, estimator comparisons, rate fits.

A sweep is deterministic given its base seed: trial t draws with seed
base+t and corrupts with the same seed on a separate stream.  Trials
are independent and may run in worker processes; rows are merged in a
fixed order, so the report CSV is reproducible run to run (the wall
time column excepted, which is inherently nondeterministic).
"""

from __future__ import annotations

import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from sosmean.adversary import AdversaryStrategy, corrupt, parse_strategy, strategy_name
from sosmean.certify import BoundFormulas, theory_error_rate
from sosmean.distributions import DistributionSpec, parse_spec, sample, spec_to_dict
from sosmean.estimators import (
    EstimationError,
    coordinate_median,
    geometric_median,
    sample_mean,
    sos_mean,
)

KNOWN_ESTIMATORS = ("sos", "mean", "median", "geomedian")


@dataclass(frozen=True)
class ExperimentConfig:
    dist: DistributionSpec
    strategy: AdversaryStrategy
    eps_grid: tuple[float, ...]
    n: int = 40
    d: int = 2
    k: int = 2
    r: int = 2
    trials: int = 20
    base_seed: int = 1000
    sigma: float = 1.0
    tol: float = 1e-3
    max_iter: int = 1500
    estimators: tuple[str, ...] = ("sos", "mean", "median")
    workers: int = 0
    single_precision: bool = True

    def __post_init__(self):
        if not self.eps_grid or any(not 0.0 <= e < 0.5 for e in self.eps_grid):
            raise ValueError("eps grid must be nonempty inside [0, 1/2)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.k not in (2, 4):
            raise ValueError("k must be 2 or 4")
        if self.k == 4 and self.d > 2:
            raise ValueError("k=4 runs need d <= 2")
        if self.r not in (1, 2, 3):
            raise ValueError("r must be 1, 2, or 3")
        unknown = set(self.estimators) - set(KNOWN_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")


@dataclass
class SweepRow:
    eps: float
    trial: int
    estimator: str
    error: float
    bound_optimal: float
    bound_breakdown: float
    residual_eq: float
    residual_psd: float
    seconds: float
    status: str = "ok"


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[SweepRow]

    def median_errors(self, estimator: str) -> dict[float, float]:
        out = {}
        for eps in self.config.eps_grid:
            errs = [
                r.error for r in self.rows if r.estimator == estimator and r.eps == eps
            ]
            out[eps] = statistics.median(errs) if errs else math.nan
        return out

    def iqr(self, estimator: str, eps: float) -> float:
        errs = sorted(
            r.error for r in self.rows if r.estimator == estimator and r.eps == eps
        )
        if len(errs) < 4:
            return math.nan
        q = statistics.quantiles(errs, n=4)
        return q[2] - q[0]

    def to_csv(self) -> str:
        header = (
            "eps,trial,estimator,error,bound_optimal,bound_breakdown,"
            "residual_eq,residual_psd,seconds"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.eps!r},{r.trial},{r.estimator},{r.error!r},"
                f"{r.bound_optimal!r},{r.bound_breakdown!r},"
                f"{r.residual_eq!r},{r.residual_psd!r},{r.seconds!r}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        med = {
            est: {repr(eps): val for eps, val in self.median_errors(est).items()}
            for est in self.config.estimators
        }
        iqr = {
            est: {
                repr(eps): self.iqr(est, eps) for eps in self.config.eps_grid
            }
            for est in self.config.estimators
        }
        return {
            "config": config_to_dict(self.config),
            "median_error": med,
            "iqr": iqr,
            "failed_rows": sum(1 for r in self.rows if r.status != "ok"),
        }


def _bounds_for(cfg: ExperimentConfig, eps: float) -> tuple[float, float]:
    """Theory bounds in error units (square roots of the squared budgets)."""
    if eps == 0.0:
        return 0.0, 0.0
    if cfg.k == 2:
        return (
            cfg.sigma * math.sqrt(BoundFormulas.bounded_cov_optimal(eps)),
            cfg.sigma * math.sqrt(BoundFormulas.bounded_cov_breakdown(eps)),
        )
    return (
        math.sqrt(BoundFormulas.kmoment_optimal(eps, cfg.k)),
        math.sqrt(BoundFormulas.kmoment_breakdown(eps, cfg.k)),
    )


def _run_cell(args: tuple) -> list[SweepRow]:
    cfg, eps, trial = args
    seed = cfg.base_seed + trial
    clean = sample(cfg.dist, cfg.n, seed)
    zset = corrupt(clean, eps, cfg.strategy, seed)
    b_opt, b_break = _bounds_for(cfg, eps)
    rows = []
    for est in cfg.estimators:
        status = "ok"
        residual_eq = residual_psd = 0.0
        iterations = 0
        if est == "sos":
            try:
                rep = sos_mean(
                    zset,
                    sigma=cfg.sigma,
                    k=cfg.k,
                    r=cfg.r,
                    tol=cfg.tol,
                    max_iter=cfg.max_iter,
                    single_precision=cfg.single_precision,
                    keep_pe=False,
                )
            except EstimationError as exc:
                rep = getattr(exc, "report", None)
                if rep is None:
                    rows.append(
                        SweepRow(
                            eps=eps,
                            trial=trial,
                            estimator=est,
                            error=float("nan"),
                            bound_optimal=b_opt,
                            bound_breakdown=b_break,
                            residual_eq=float("nan"),
                            residual_psd=float("nan"),
                            seconds=0.0,
                            status="infeasible",
                        )
                    )
                    continue
                status = rep.status
            else:
                status = rep.status
            residual_eq, residual_psd = rep.residual_eq, rep.residual_psd
        elif est == "mean":
            rep = sample_mean(zset)
        elif est == "median":
            rep = coordinate_median(zset)
        else:
            rep = geometric_median(zset)
        rows.append(
            SweepRow(
                eps=eps,
                trial=trial,
                estimator=est,
                error=rep.error,
                bound_optimal=b_opt,
                bound_breakdown=b_break,
                residual_eq=residual_eq,
                residual_psd=residual_psd,
                seconds=rep.seconds,
                status=status,
            )
        )
    return rows


def run_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the grid; per-cell failures are recorded, never fatal."""
    cells = [(cfg, eps, trial) for eps in cfg.eps_grid for trial in range(cfg.trials)]
    workers = cfg.workers if cfg.workers > 0 else min(os.cpu_count() or 1, 8)
    if workers > 1 and len(cells) > 1:
        import multiprocessing as mp

        # fork keeps the caller's __main__ out of the picture; the solver
        # pins its own BLAS threads, so workers do not oversubscribe
        try:
            ctx = mp.get_context("fork")
        except ValueError:
            ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            chunks = list(pool.map(_run_cell, cells, chunksize=1))
    else:
        chunks = [_run_cell(c) for c in cells]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.eps, r.trial, cfg.estimators.index(r.estimator)))
    return ExperimentReport(config=cfg, rows=rows)


@dataclass
class RatePair:
    eps_low: float
    eps_high: float
    empirical_ratio: float
    theory_ratio: float

    @property
    def fit(self) -> float:
        return self.empirical_ratio / self.theory_ratio


@dataclass
class RateFit:
    pairs: list[RatePair]
    verdict: str  # "PASS" or "FAIL"
    window: tuple[float, float] = (0.5, 2.0)


def fit_rate(
    report: ExperimentReport,
    estimator: str,
    anchor: Optional[float] = None,
    window: tuple[float, float] = (0.5, 2.0),
) -> RateFit:
    """Compare empirical error growth across the grid to the theory curve.

    For each grid pair (anchored pairs only when `anchor` is given), the
    ratio of median errors is divided by the ratio of theory rates;
    verdict PASS iff all these fits lie within the window.
    """
    cfg = report.config
    grid = sorted(set(cfg.eps_grid))
    if len(grid) < 2:
        raise ValueError("need at least two grid points")
    med = report.median_errors(estimator)
    counts = {
        eps: sum(1 for r in report.rows if r.estimator == estimator and r.eps == eps)
        for eps in grid
    }
    if any(c < 10 for c in counts.values()):
        raise ValueError("need at least 10 trials per grid point")
    pairs = []
    for i, lo in enumerate(grid):
        for hi in grid[i + 1 :]:
            if anchor is not None and anchor not in (lo, hi):
                continue
            if lo == 0.0:
                continue  # theory rate vanishes at zero corruption
            emp = med[hi] / med[lo]
            theo = theory_error_rate(hi, cfg.k) / theory_error_rate(lo, cfg.k)
            pairs.append(
                RatePair(
                    eps_low=lo, eps_high=hi, empirical_ratio=emp, theory_ratio=theo
                )
            )
    ok = all(window[0] <= p.fit <= window[1] for p in pairs)
    return RateFit(pairs=pairs, verdict="PASS" if ok else "FAIL", window=window)


# --- config file -------------------------------------------------------------

def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "dist": spec_to_dict(cfg.dist),
        "strategy": strategy_name(cfg.strategy),
        "eps_grid": list(cfg.eps_grid),
        "n": cfg.n,
        "d": cfg.d,
        "k": cfg.k,
        "r": cfg.r,
        "trials": cfg.trials,
        "base_seed": cfg.base_seed,
        "sigma": cfg.sigma,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "estimators": list(cfg.estimators),
    }


def parse_config_file(path: str | Path) -> ExperimentConfig:
    """Key-value sweep configs, one `key = value` per line, '#' comments.

    Keys: dist, strategy, eps_grid (comma separated), n, d, k, r, trials,
    base_seed, sigma, tol, max_iter, estimators (comma separated),
    workers, single_precision.
    """
    raw: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    d = int(raw.get("d", 2))
    cfg = ExperimentConfig(
        dist=parse_spec(raw.get("dist", "bounded-cov:sigma=1"), d=d),
        strategy=parse_strategy(raw.get("strategy", "cluster-spike:k=2"), d=d),
        eps_grid=tuple(float(x) for x in raw.get("eps_grid", "0.1,0.3").split(",")),
        n=int(raw.get("n", 40)),
        d=d,
        k=int(raw.get("k", 2)),
        r=int(raw.get("r", 2)),
        trials=int(raw.get("trials", 20)),
        base_seed=int(raw.get("base_seed", 1000)),
        sigma=float(raw.get("sigma", 1.0)),
        tol=float(raw.get("tol", 1e-3)),
        max_iter=int(raw.get("max_iter", 1500)),
        estimators=tuple(
            e.strip() for e in raw.get("estimators", "sos,mean,median").split(",")
        ),
        workers=int(raw.get("workers", 0)),
        single_precision=raw.get("single_precision", "true").lower()
        in ("1", "true", "yes"),
    )
    return cfg


def write_outputs(report: ExperimentReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    csv_path.write_text(report.to_csv())
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(report.summary(), indent=2, sort_keys=True))
    return csv_path, summary_path
