"""Mean estimators: the moment-relaxation rounding and classical baselines.

The headline estimator solves the compiled relaxation of the selector
system and rounds by taking the pseudo-moment of mu.  Rounding this way
inherits the system's error certificate: the squared distance from any
fixed vector is at most the pseudo-expectation of the squared distance.

Numerics around the solve:

  * the data is anchored at the coordinate-wise median and scaled by the
    (slack-inflated) sigma, making the pipeline translation equivariant
    and unit-free inside the solver;
  * rows provably excluded from every feasible selection are pruned
    before compilation.  A feasible selection keeps all its points
    within sigma*sqrt(n) of its own mean, and must share at least one
    point with the tightest (1-eps)n-point ball around the median, so
    anything beyond that ball's radius plus 2*sigma*sqrt(n) can never
    be selected.  Pruning is exactly the restriction w_i = 0, which
    preserves the witness and every certificate while keeping extreme
    outlier magnitudes out of the compiled coefficients;
  * the solver starts from the moments of independent Bernoulli
    selectors at the selection fraction with mu at the kept-data mean:
    a genuine distribution's moment vector that carries no hint of
    which points are clean.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from sosmean.adversary import CorruptedSet
from sosmean import relax as relax_mod
from sosmean import sdp


class EstimationError(RuntimeError):
    """Estimator could not produce a usable result; carries diagnostics."""

    def __init__(self, message: str, result: Optional[sdp.SolveResult] = None):
        super().__init__(message)
        self.result = result


@dataclass
class EstimateReport:
    estimator: str
    mu_hat: np.ndarray
    error: float
    seconds: float
    residual_eq: float = 0.0
    residual_psd: float = 0.0
    status: str = "ok"
    iterations: int = 0
    details: dict = field(default_factory=dict)
    pe: Optional[sdp.PseudoExpectation] = None
    transform: Optional[tuple[np.ndarray, float]] = None

    def __post_init__(self):
        self.mu_hat = np.asarray(self.mu_hat, dtype=float)
        if not np.all(np.isfinite(self.mu_hat)):
            raise ValueError("estimate must be finite")
        if self.error < 0:
            raise ValueError("error must be nonnegative")


def _error_against(origin_mean: np.ndarray, mu_hat: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(mu_hat) - np.asarray(origin_mean)))


def lower_coordinate_median(z: np.ndarray) -> np.ndarray:
    """Coordinate-wise lower median (index (n-1)//2 of each sorted column)."""
    z = np.asarray(z, dtype=float)
    return np.sort(z, axis=0)[(z.shape[0] - 1) // 2]


def sample_mean(zset: CorruptedSet) -> EstimateReport:
    t0 = time.perf_counter()
    mu = zset.z.mean(axis=0)
    return EstimateReport(
        estimator="mean",
        mu_hat=mu,
        error=_error_against(zset.origin.empirical_mean, mu),
        seconds=time.perf_counter() - t0,
    )


def coordinate_median(zset: CorruptedSet) -> EstimateReport:
    t0 = time.perf_counter()
    mu = lower_coordinate_median(zset.z)
    return EstimateReport(
        estimator="median",
        mu_hat=mu,
        error=_error_against(zset.origin.empirical_mean, mu),
        seconds=time.perf_counter() - t0,
    )


def weiszfeld(z: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Geometric median by iteratively re-weighted averaging.

    If an iterate lands on a data point, the subgradient condition
    decides between stopping there and stepping off along the steepest
    descent direction.  Convergence criterion: the gradient norm of
    sum_i ||z_i - mu|| drops to tol * n away from data points.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if n == 1 or np.allclose(z, z[0]):
        return z[0].copy()
    mu = z.mean(axis=0)
    for _ in range(max_iter):
        diff = z - mu
        dist = np.linalg.norm(diff, axis=1)
        at_point = dist < 1e-12
        if at_point.any():
            others = ~at_point
            grad_others = -(diff[others] / dist[others, None]).sum(axis=0)
            multiplicity = int(at_point.sum())
            if np.linalg.norm(grad_others) <= multiplicity + tol * n:
                return mu
            direction = -grad_others / np.linalg.norm(grad_others)
            step = (np.linalg.norm(grad_others) - multiplicity) / (
                1.0 / dist[others]
            ).sum()
            mu = mu + step * direction
            continue
        weights = 1.0 / dist
        grad = -(diff * weights[:, None]).sum(axis=0)
        if np.linalg.norm(grad) <= tol * n:
            return mu
        mu = (z * weights[:, None]).sum(axis=0) / weights.sum()
    raise EstimationError("geometric median did not converge")


def geometric_median(zset: CorruptedSet, tol: float = 1e-10) -> EstimateReport:
    t0 = time.perf_counter()
    mu = weiszfeld(zset.z, tol=tol)
    return EstimateReport(
        estimator="geomedian",
        mu_hat=mu,
        error=_error_against(zset.origin.empirical_mean, mu),
        seconds=time.perf_counter() - t0,
    )


def kolmogorov_distance_to_gaussian(z_sorted: np.ndarray, mus: np.ndarray) -> np.ndarray:
    """sup_x |F_n(x) - Phi(x - mu)| for each candidate mu, exact over the
    empirical jump points."""
    n = z_sorted.shape[0]
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    out = np.empty(mus.shape[0])
    # chunk the grid so the (n x grid) CDF table stays small
    chunk = max(1, int(4e6 / max(n, 1)))
    for start in range(0, mus.shape[0], chunk):
        sub = mus[start : start + chunk]
        cdf = ndtr(z_sorted[:, None] - sub[None, :])
        dev = np.maximum(np.abs(hi[:, None] - cdf), np.abs(cdf - lo[:, None]))
        out[start : start + sub.shape[0]] = dev.max(axis=0)
    return out


def gaussian_projection_1d(
    z: Sequence[float] | np.ndarray,
    grid_halfwidth: float = 8.0,
    grid_step: float = 0.01,
    origin_mean: float | None = None,
) -> EstimateReport:
    """Project the empirical CDF onto the unit-variance Gaussian location
    family under Kolmogorov distance, by grid search around the median."""
    t0 = time.perf_counter()
    z = np.asarray(z, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("need data")
    if grid_step <= 0 or grid_halfwidth < 0:
        raise ValueError("empty grid")
    steps = int(math.floor(grid_halfwidth / grid_step))
    center = float(np.median(z))
    grid = center + grid_step * np.arange(-steps, steps + 1)
    dists = kolmogorov_distance_to_gaussian(np.sort(z), grid)
    best = int(np.argmin(dists))
    mu = float(grid[best])
    err = abs(mu - origin_mean) if origin_mean is not None else 0.0
    return EstimateReport(
        estimator="gauss1d",
        mu_hat=np.array([mu]),
        error=err,
        seconds=time.perf_counter() - t0,
        details={"kolmogorov_distance": float(dists[best]), "grid_size": grid.size},
    )


def sparse_truncate(x: Sequence[float] | np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries (ties: lowest index), zero the rest."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= x.size:
        raise ValueError("k out of range")
    order = np.lexsort((np.arange(x.size), -np.abs(x)))
    out = np.zeros_like(x)
    keep = order[:k]
    out[keep] = x[keep]
    return out


def norm_2k(x: Sequence[float] | np.ndarray, k: int) -> float:
    """Euclidean norm of the k largest-magnitude entries; equals the
    maximum inner product with k-sparse unit vectors."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= x.size:
        raise ValueError("k out of range")
    mags = np.sort(np.abs(x))[::-1]
    return float(np.linalg.norm(mags[:k]))


PRUNE_SLACK = 1e-9


def certified_prune(scaled: np.ndarray, mass_rhs: float) -> np.ndarray:
    """Keep-mask for rows that could appear in some feasible selection.

    In solver units (unit sigma, anchor at the origin): every feasible
    selection lies within sqrt(n) of its own mean and intersects the
    tightest ball around the anchor holding ceil(mass_rhs) points, so
    rows beyond that radius plus 2*sqrt(n) are excluded for certain.
    """
    n = scaled.shape[0]
    norms = np.linalg.norm(scaled, axis=1)
    m0 = int(math.ceil(mass_rhs - 1e-12))
    if m0 > n:
        return np.zeros(n, dtype=bool)
    ball_radius = np.sort(norms)[m0 - 1] if m0 >= 1 else 0.0
    radius = ball_radius + 2.0 * math.sqrt(n)
    return norms <= radius * (1.0 + PRUNE_SLACK) + PRUNE_SLACK


def sos_mean(
    zset: CorruptedSet,
    sigma: float,
    k: int = 2,
    r: int = 2,
    tol: float = sdp.DEFAULT_TOL,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
    sigma_slack: float = 1.1,
    prefilter: bool = True,
    objective_anchor: Optional[tuple[np.ndarray, str]] = None,
    y0: Optional[np.ndarray] = None,
    single_precision: bool = False,
    keep_pe: bool = True,
    trace_path: Optional[str] = None,
) -> EstimateReport:
    """Mean estimate mu_hat = pseudo-moment of mu for the selector system.

    sigma is taken as given; a sigma_slack multiplier (reported in the
    output) keeps the clean-data witness feasible under sampling noise.
    The default solve is pure feasibility; `objective_anchor=(c, sense)`
    with sense 'min' or 'max' instead optimizes E~[||mu - c||^2], the
    'max' direction probing the relaxation's certified error budget.
    Raises EstimationError on solver infeasibility or non-convergence,
    with the partial result attached.
    """
    t0 = time.perf_counter()
    z = zset.z
    n, d = z.shape
    anchor = lower_coordinate_median(z)
    sigma_solve = sigma_slack * sigma
    scaled = (z - anchor) / sigma_solve
    mass_rhs = (1.0 - zset.epsilon) * n
    keep = (
        certified_prune(scaled, mass_rhs)
        if prefilter
        else np.ones(n, dtype=bool)
    )
    kept = scaled[keep]
    if kept.shape[0] < mass_rhs - 1e-9:
        raise EstimationError(
            "magnitude guard left fewer rows than the selection mass requires"
        )
    moment_rhs = (1.0 if k == 2 else float(k ** (k // 2))) * n
    system = relax_mod.build_system_from_points(
        z=kept,
        eps=zset.epsilon,
        sigma=1.0,
        k=k,
        mass_rhs=mass_rhs,
        moment_rhs=moment_rhs,
        witness_mask=zset.mask_wstar[keep] if zset.mask_wstar is not None else None,
    )
    rel = relax_mod.compile_relaxation(system, r)
    # when the ground-truth selection is known and feasible the system is
    # provably feasible, so stalls must surface as NotConverged rather
    # than trip the divergence heuristic
    infeasible_factor = 10.0
    if system.witness_mask is not None:
        if relax_mod.evaluate_selection(system, system.witness_mask.astype(float)).feasible:
            infeasible_factor = math.inf
    objective = None
    if objective_anchor is not None:
        center, sense = objective_anchor
        if sense not in ("min", "max"):
            raise ValueError("objective sense must be 'min' or 'max'")
        center_scaled = (np.asarray(center, dtype=float) - anchor) / sigma_solve
        from sosmean.monomials import Poly

        dist2 = Poly.constant(0.0, d)
        for j in range(d):
            term = Poly.mu(j, d) - float(center_scaled[j])
            dist2 = dist2 + term * term
        objective = dist2 if sense == "min" else -1.0 * dist2
    if y0 is None:
        frac = min(mass_rhs / kept.shape[0], 1.0)
        y0 = relax_mod.product_moment_vector(
            rel, np.full(kept.shape[0], frac), kept.mean(axis=0)
        )
    result = sdp.solve(
        rel,
        objective=objective,
        tol=tol,
        max_iter=max_iter,
        y0=y0,
        single_precision=single_precision,
        infeasible_factor=infeasible_factor,
        trace_path=trace_path,
    )
    if result.status == sdp.INFEASIBLE:
        raise EstimationError("selector system reported infeasible", result)
    pe = result.pe
    mu_hat = anchor + sigma_solve * pe.mean_vector()
    psd_worst = min(
        pe.residuals.block_min_eig[name]
        / (1.0 + abs(pe.residuals.block_trace[name]))
        for name in pe.residuals.block_min_eig
    )
    report = EstimateReport(
        estimator="sos",
        mu_hat=mu_hat,
        error=_error_against(zset.origin.empirical_mean, mu_hat),
        seconds=time.perf_counter() - t0,
        residual_eq=pe.residuals.equality_max,
        residual_psd=psd_worst,
        status=result.status,
        iterations=result.iterations,
        details={
            "sigma_input": sigma,
            "sigma_solve": sigma_solve,
            "sigma_slack": sigma_slack,
            "kept_rows": int(keep.sum()),
            "pruned_rows": int(n - keep.sum()),
            "k": k,
            "r": r,
        },
        pe=pe if keep_pe else None,
        transform=(anchor, sigma_solve),
    )
    if result.status == sdp.NOT_CONVERGED:
        err = EstimationError("solver hit the iteration budget", result)
        err.report = report
        raise err
    return report


def pe_squared_distance(
    pe: sdp.PseudoExpectation,
    transform: tuple[np.ndarray, float],
    center: np.ndarray,
) -> float:
    """E~[||mu - center||^2] in original data units, for a pe solved on
    anchored and scaled data."""
    anchor, scale = transform
    center_scaled = (np.asarray(center, dtype=float) - anchor) / scale
    d = pe.relaxation.system.d
    from sosmean.monomials import Poly

    total = 0.0
    for j in range(d):
        mu_j = Poly.mu(j, d)
        total += pe.evaluate(mu_j * mu_j) - 2.0 * center_scaled[j] * pe.evaluate(
            mu_j
        ) + center_scaled[j] ** 2
    return float(scale**2 * total)
