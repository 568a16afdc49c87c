"""Exact verifiers: lower-bound pairs, bound formulas, inequality toolkit.

Every lower-bound construction carries closed forms (total variation,
mean gap, central moments) that are checked to 1e-9 at construction.
The inequality toolkit evaluates each algebraic inequality the error
certificates rest on at randomized inputs respecting its side
conditions, demanding zero violations beyond relative slack 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from sosmean.adversary import CorruptedSet
from sosmean.distributions import (
    DistributionSpec,
    GaussianIdentity,
    GaussianSpikeMixture,
    TwoPointMixture,
    dim,
    population_mean,
    population_variance_1d,
    rng,
)

EXACT_TOL = 1e-9


# --- total variation -------------------------------------------------------

def _atoms_and_gaussians(spec: DistributionSpec):
    """1-D spec -> (atom dict loc->mass, gaussian list (mean, weight))."""
    if isinstance(spec, TwoPointMixture):
        atoms: dict[float, float] = {}
        atoms[spec.base] = atoms.get(spec.base, 0.0) + (1.0 - spec.prob)
        atoms[spec.spike] = atoms.get(spec.spike, 0.0) + spec.prob
        return atoms, []
    if isinstance(spec, GaussianSpikeMixture):
        return {spec.spike: spec.prob}, [(spec.gauss_mean, 1.0 - spec.prob)]
    if isinstance(spec, GaussianIdentity):
        if len(spec.mean) != 1:
            raise ValueError("only 1-D supported")
        return {}, [(spec.mean[0], 1.0)]
    raise ValueError(f"unsupported spec {spec!r}")


def gaussian_tv(m1: float, m2: float) -> float:
    """TV between two unit-variance Gaussians: 2*Phi(|m1-m2|/2) - 1."""
    return float(2.0 * ndtr(abs(m1 - m2) / 2.0) - 1.0)


def gaussian_tv_quadrature(m1: float, m2: float, w1: float = 1.0, w2: float = 1.0) -> float:
    """Numeric oracle: (1/2) integral |w1 phi(x-m1) - w2 phi(x-m2)| dx."""
    def integrand(x):
        return abs(
            w1 * math.exp(-((x - m1) ** 2) / 2.0) - w2 * math.exp(-((x - m2) ** 2) / 2.0)
        ) / math.sqrt(2.0 * math.pi)

    lo = min(m1, m2) - 40.0
    hi = max(m1, m2) + 40.0
    val, _ = quad(integrand, lo, hi, epsabs=1e-12, limit=400, points=[(m1 + m2) / 2.0])
    return 0.5 * val


def tv_distance(d1: DistributionSpec, d2: DistributionSpec) -> tuple[float, float]:
    """(total variation, overlap); exact for the supported 1-D families.

    Point-mass mixtures are handled by mass accounting; equal-variance
    Gaussian pairs by the closed form; mixed continuous weights fall
    back to adaptive quadrature (absolute error below 1e-10).
    """
    if dim(d1) != 1 or dim(d2) != 1:
        raise ValueError("tv_distance handles 1-D specs")
    atoms1, gs1 = _atoms_and_gaussians(d1)
    atoms2, gs2 = _atoms_and_gaussians(d2)
    tv = 0.0
    for loc in set(atoms1) | set(atoms2):
        tv += 0.5 * abs(atoms1.get(loc, 0.0) - atoms2.get(loc, 0.0))
    if gs1 or gs2:
        if len(gs1) <= 1 and len(gs2) <= 1:
            m1, w1 = gs1[0] if gs1 else (0.0, 0.0)
            m2, w2 = gs2[0] if gs2 else (0.0, 0.0)
            if w1 == 0.0 or w2 == 0.0:
                tv += 0.5 * (w1 + w2)
            elif m1 == m2:
                tv += 0.5 * abs(w1 - w2)
            elif w1 == w2:
                tv += w1 * gaussian_tv(m1, m2)
            else:
                tv += gaussian_tv_quadrature(m1, m2, w1, w2)
        else:
            raise ValueError("unsupported continuous mixture pair")
    tv = min(max(tv, 0.0), 1.0)
    return tv, 1.0 - tv


# --- lower-bound pairs -----------------------------------------------------

@dataclass(frozen=True)
class LowerBoundPair:
    """Two explicit 1-D distributions witnessing an estimation limit."""

    d1: DistributionSpec
    d2: DistributionSpec
    eps: float
    family: str
    k: Optional[int] = None
    tv: float = 0.0
    mean_gap: float = 0.0
    kth_central_moment_d2: Optional[float] = None
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        tv, _ = tv_distance(self.d1, self.d2)
        if abs(tv - self.tv) > EXACT_TOL:
            raise ValueError(f"tv mismatch: computed {tv}, stored {self.tv}")
        if self.tv > 2.0 * self.eps + EXACT_TOL:
            raise ValueError("pair is farther than 2*eps in total variation")
        gap = abs(
            float(population_mean(self.d1)[0]) - float(population_mean(self.d2)[0])
        )
        if abs(gap - self.mean_gap) > EXACT_TOL:
            raise ValueError(f"mean gap mismatch: computed {gap}, stored {self.mean_gap}")


def moment_pair_spike(eps: float, k: int) -> float:
    return math.sqrt(k) * (2.0 * eps * (1.0 - 2.0 * eps)) ** (-1.0 / k)


def moment_pair_gap(eps: float, k: int) -> float:
    return (
        math.sqrt(k) * (2.0 * eps) ** (1.0 - 1.0 / k) * (1.0 - 2.0 * eps) ** (-1.0 / k)
    )


def moment_pair_kth_moment(eps: float, k: int) -> float:
    return k ** (k / 2.0) * ((2.0 * eps) ** (k - 1) + (1.0 - 2.0 * eps) ** (k - 1))


def lb_bounded_moment_pair(eps: float, k: int) -> LowerBoundPair:
    """Point mass against the two-point spike mixture: TV exactly 2*eps,
    k-th central moment at most k^(k/2), mean gap
    sqrt(k) (2 eps)^(1-1/k) (1-2 eps)^(-1/k)."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if k < 2 or k % 2 != 0:
        raise ValueError("k must be an even integer >= 2")
    spike = moment_pair_spike(eps, k)
    d1 = TwoPointMixture(base=0.0, spike=spike, prob=0.0)
    d2 = TwoPointMixture(base=0.0, spike=spike, prob=2.0 * eps)
    moment = moment_pair_kth_moment(eps, k)
    gap = moment_pair_gap(eps, k)
    # direct k-th central moment of d2 must agree with the closed form
    m2 = 2.0 * eps * spike
    direct = (1.0 - 2.0 * eps) * (0.0 - m2) ** k + 2.0 * eps * (spike - m2) ** k
    if abs(direct - moment) > EXACT_TOL * max(1.0, moment):
        raise AssertionError("closed-form k-th moment disagrees with direct evaluation")
    if moment > k ** (k / 2.0) + EXACT_TOL:
        raise AssertionError("k-th moment exceeds the certifiable budget")
    return LowerBoundPair(
        d1=d1,
        d2=d2,
        eps=eps,
        family="moment",
        k=k,
        tv=2.0 * eps,
        mean_gap=gap,
        kth_central_moment_d2=moment,
        checks={"moment_budget": k ** (k / 2.0), "spike": spike},
    )


def lb_gaussian_pair(eps: float) -> LowerBoundPair:
    """Two unit-variance Gaussians exactly 2*eps apart in total variation.

    The separation solves 2*Phi(mu/2) - 1 = 2*eps and always dominates
    sqrt(log(1/(1-2*eps)) - log 2), the bound the Gaussian-KL route
    gives; that route is vacuous for eps <= 1/4, hence the gate.
    """
    if not 0.25 < eps < 0.5:
        raise ValueError("eps must lie in (1/4, 1/2)")
    mu = 2.0 * float(ndtri(0.5 + eps))
    if abs(2.0 * ndtr(mu / 2.0) - 1.0 - 2.0 * eps) > 1e-8:
        raise AssertionError("TV calibration failed")
    kl_bound = math.sqrt(math.log(1.0 / (1.0 - 2.0 * eps)) - math.log(2.0))
    if mu < kl_bound - EXACT_TOL:
        raise AssertionError("separation fell below the divergence bound")
    return LowerBoundPair(
        d1=GaussianIdentity(mean=(0.0,)),
        d2=GaussianIdentity(mean=(mu,)),
        eps=eps,
        family="gaussian",
        k=None,
        tv=gaussian_tv(0.0, mu),
        mean_gap=mu,
        kth_central_moment_d2=1.0,
        checks={
            "kl_lower_bound": kl_bound,
            "tsybakov_bound": math.sqrt(2.0 * math.log(1.0 / (2.0 - 4.0 * eps)))
            if eps > 0.25
            else float("nan"),
        },
    )


def lb_gauss_vs_bounded_cov(eps: float, regime: str) -> LowerBoundPair:
    """Standard Gaussian against a spiked copy of itself.

    'large' regime (eps > 1/4): spike at (1-2 eps)^(-1/2) (2 eps)^(-1)
    with mass 2 eps; variance 1 + (1-2 eps)(1 + 1/(2 eps)) <= 1 + 3 delta
    and mean gap delta^(-1/2).

    'small' regime (eps <= 0.1): spike at sqrt(log(1/eps)) with mass eps;
    variance (1-eps) + eps (1-eps) log(1/eps) <= 1 + eps log(1/eps) and
    mean gap eps sqrt(log(1/eps)).
    """
    if regime == "large":
        if not 0.25 < eps < 0.5:
            raise ValueError("large regime needs eps in (1/4, 1/2)")
        delta = 1.0 - 2.0 * eps
        spike = delta ** (-0.5) / (2.0 * eps)
        prob = 2.0 * eps
        gap = delta ** (-0.5)
        variance = 1.0 + delta * (1.0 + 1.0 / (2.0 * eps))
        var_budget = 1.0 + 3.0 * delta
        tv = prob
    elif regime == "small":
        if not 0.0 < eps <= 0.1:
            raise ValueError("small regime needs eps in (0, 0.1]")
        log_term = math.log(1.0 / eps)
        spike = math.sqrt(log_term)
        prob = eps
        gap = eps * spike
        variance = (1.0 - eps) + eps * (1.0 - eps) * log_term
        var_budget = 1.0 + eps * log_term
        tv = prob
    else:
        raise ValueError("regime must be 'large' or 'small'")
    d2 = GaussianSpikeMixture(gauss_mean=0.0, spike=spike, prob=prob)
    direct_var = population_variance_1d(d2)
    if abs(direct_var - variance) > EXACT_TOL * max(1.0, variance):
        raise AssertionError("closed-form variance disagrees with direct evaluation")
    if variance > var_budget + EXACT_TOL:
        raise AssertionError("variance exceeds the regime budget")
    return LowerBoundPair(
        d1=GaussianIdentity(mean=(0.0,)),
        d2=d2,
        eps=eps,
        family=f"gauss-vs-cov-{regime}",
        k=2,
        tv=tv,
        mean_gap=gap,
        kth_central_moment_d2=variance,
        checks={"variance_budget": var_budget, "spike": spike},
    )


def identifiability_margin(pair: LowerBoundPair, k: int) -> float:
    """Overlap-identifiability sanity value: gap * overlap^(1/k) / sqrt(k).

    For pairs whose members have k-th central moments within the
    certifiable budget this stays O(1): large overlap forces close
    means at the sqrt(k)/overlap^(1/k) scale.
    """
    _, overlap = tv_distance(pair.d1, pair.d2)
    return pair.mean_gap * overlap ** (1.0 / k) / math.sqrt(k)


# --- theorem bound formulas -------------------------------------------------

@dataclass(frozen=True)
class BoundFormulas:
    """Squared-error budgets certified by the selector-system analyses,
    as plain evaluators in eps (and k, t, M where they apply)."""

    @staticmethod
    def bounded_cov_optimal(eps: float) -> float:
        _check_eps(eps)
        return 8.0 * eps / (1.0 - 2.0 * eps)

    @staticmethod
    def bounded_cov_breakdown(eps: float) -> float:
        _check_eps(eps)
        return 8.0 * eps / (1.0 - 2.0 * eps) ** 2

    @staticmethod
    def kmoment_optimal(eps: float, k: int) -> float:
        _check_eps(eps)
        return 4.0 * k / (1.0 - 2.0 * eps) ** (2.0 / k)

    @staticmethod
    def kmoment_breakdown(eps: float, k: int) -> float:
        _check_eps(eps)
        delta = 1.0 - 2.0 * eps
        kth_power = 2.0 ** (2 * k - 1) * eps ** (k - 1) * k ** (k / 2.0) / delta**k
        return kth_power ** (2.0 / k)

    @staticmethod
    def sparse_breakdown(eps: float, t: int, big_m: float) -> float:
        _check_eps(eps)
        return (
            2.0 ** (2.0 - 1.0 / t)
            * eps ** (1.0 - 1.0 / t)
            * big_m ** (1.0 / t)
            / (1.0 - 2.0 * eps)
        )

    @staticmethod
    def gaussian_rate(eps: float) -> float:
        _check_eps(eps)
        return math.sqrt(math.log(1.0 / (1.0 - 2.0 * eps)))


def _check_eps(eps: float) -> None:
    if not 0.0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 1/2)")


def theory_error_rate(eps: float, k: int) -> float:
    """Error-scale curve used for empirical rate fits: sqrt(eps/(1-2eps))
    for k=2, sqrt(k)/(1-2eps)^(1/k) for higher moments."""
    _check_eps(eps)
    if k == 2:
        return math.sqrt(eps / (1.0 - 2.0 * eps)) if eps > 0 else 0.0
    return math.sqrt(k) / (1.0 - 2.0 * eps) ** (1.0 / k)


# --- ground-truth selection identities --------------------------------------

@dataclass
class IdentityReport:
    consistency_ok: bool
    boolean_identity_ok: bool
    miss_fraction: float
    miss_bound: float
    overlap_fraction: float
    overlap_bound: float

    @property
    def all_ok(self) -> bool:
        return (
            self.consistency_ok
            and self.boolean_identity_ok
            and self.miss_fraction <= self.miss_bound
            and self.overlap_fraction >= self.overlap_bound
        )


def check_feasibility_identities(zset: CorruptedSet, w) -> IdentityReport:
    """Exact boolean arithmetic on a candidate selection against the
    ground-truth mask: agreement on doubly selected rows, idempotence of
    the miss indicator, miss fraction at most 2*eps, overlap at least
    1 - 2*eps.  Requires boolean w with the selection-mass constraint."""
    w = np.asarray(w)
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("w must be boolean")
    n = zset.n
    if w.shape != (n,):
        raise ValueError("w has the wrong length")
    if w.sum() < (1.0 - zset.epsilon) * n - 1e-9:
        raise ValueError("w violates the selection-mass constraint")
    w = w.astype(np.int64)
    wstar = zset.mask_wstar.astype(np.int64)
    both = w * wstar
    consistency = bool(
        np.array_equal(zset.z[both.astype(bool)], zset.origin.data[both.astype(bool)])
    )
    boolean_identity = bool(np.array_equal((1 - both) ** 2, 1 - both))
    miss = float((1 - both).sum()) / n
    overlap = float(both.sum()) / n
    return IdentityReport(
        consistency_ok=consistency,
        boolean_identity_ok=boolean_identity,
        miss_fraction=miss,
        miss_bound=2.0 * zset.epsilon,
        overlap_fraction=overlap,
        overlap_bound=1.0 - 2.0 * zset.epsilon,
    )


# --- inequality toolkit ------------------------------------------------------

REL_SLACK = 1e-12


@dataclass
class InequalityResult:
    name: str
    trials: int
    evaluated: int
    violations: int
    worst_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


@dataclass
class ToolkitReport:
    results: list[InequalityResult]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.results)

    def as_dict(self) -> dict:
        return {
            r.name: {
                "trials": r.trials,
                "evaluated": r.evaluated,
                "violations": r.violations,
                "worst_margin": r.worst_margin,
            }
            for r in self.results
        }


def _tally(name: str, lhs: np.ndarray, rhs: np.ndarray, trials: int) -> InequalityResult:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    margin = (lhs - rhs) / scale
    violations = int((margin > REL_SLACK).sum())
    return InequalityResult(
        name=name,
        trials=trials,
        evaluated=int(lhs.size),
        violations=violations,
        worst_margin=float(margin.max()) if margin.size else -math.inf,
    )


def toolkit_suite(trials: int = 10_000, seed: int = 0) -> ToolkitReport:
    """Randomized evaluation of every inequality the certificates use.

    Inputs respect each inequality's side conditions (boolean weights,
    premise sets like X^k <= C); scale-mixed magnitudes exercise both
    tiny and large regimes.  Includes the tight boundary cases.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = rng(seed, stream=7)
    results = []

    def scales(size):
        return 10.0 ** g.uniform(-3, 3, size=size)

    # squares are nonnegative: 2ab <= a^2 + b^2
    a = g.standard_normal(trials) * scales(trials)
    b = g.standard_normal(trials) * scales(trials)
    results.append(_tally("squares-nonneg", 2 * a * b, a * a + b * b, trials))

    # Cauchy-Schwarz: <a, b>^2 <= |a|^2 |b|^2
    dim_v = 6
    av = g.standard_normal((trials, dim_v)) * scales(trials)[:, None]
    bv = g.standard_normal((trials, dim_v)) * scales(trials)[:, None]
    inner = (av * bv).sum(axis=1)
    results.append(
        _tally(
            "cauchy-schwarz",
            inner**2,
            (av * av).sum(axis=1) * (bv * bv).sum(axis=1),
            trials,
        )
    )

    # boolean-weight power-mean bound, exponents k in {2, 4, 8}:
    # (sum w_i b_i)^k <= (sum w_i)^(k-1) (sum b_i^k)
    lhs_list, rhs_list = [], []
    nvec = 9
    for k in (2, 4, 8):
        m = trials // 3 + 1
        w = (g.random((m, nvec)) < 0.6).astype(float)
        bvec = g.standard_normal((m, nvec)) * scales(m)[:, None]
        swb = (w * bvec).sum(axis=1)
        sw = w.sum(axis=1)
        lhs_list.append(swb**k)
        rhs_list.append(sw ** (k - 1) * (bvec**k).sum(axis=1))
    results.append(
        _tally(
            "holder-boolean",
            np.concatenate(lhs_list),
            np.concatenate(rhs_list),
            trials,
        )
    )

    # product versus power mean, nonnegative terms: prod a_i <= (1/t) sum a_i^t
    lhs_list, rhs_list = [], []
    for t in (2, 3, 4, 6):
        m = trials // 4 + 1
        av = np.abs(g.standard_normal((m, t))) * scales(m)[:, None]
        lhs_list.append(av.prod(axis=1))
        rhs_list.append((av**t).sum(axis=1) / t)
    results.append(
        _tally("am-gm", np.concatenate(lhs_list), np.concatenate(rhs_list), trials)
    )

    # even-power triangle: (a+b)^t <= 2^(t-1) (a^t + b^t), incl. tight a=b=1
    lhs_list, rhs_list = [], []
    for t in (2, 4, 8):
        m = trials // 3 + 1
        a = g.standard_normal(m) * scales(m)
        b = g.standard_normal(m) * scales(m)
        a[0], b[0] = 1.0, 1.0  # boundary: equality
        lhs_list.append((a + b) ** t)
        rhs_list.append(2.0 ** (t - 1) * (a**t + b**t))
    results.append(
        _tally("triangle", np.concatenate(lhs_list), np.concatenate(rhs_list), trials)
    )

    # cancellation: X^2 <= C X implies X <= C (premise-respecting inputs)
    c = scales(trials)
    x = c * g.random(trials)
    x[0] = c[0]  # boundary X = C
    results.append(_tally("cancellation", x, c, trials))

    # root extraction: X^k <= C implies X <= C^(1/k)
    lhs_list, rhs_list = [], []
    for k in (2, 4, 8):
        m = trials // 3 + 1
        c = scales(m)
        x = c ** (1.0 / k) * g.uniform(-1.0, 1.0, size=m)
        x[0] = c[0] ** (1.0 / k)  # boundary
        lhs_list.append(x)
        rhs_list.append(c ** (1.0 / k))
    results.append(
        _tally("square-root", np.concatenate(lhs_list), np.concatenate(rhs_list), trials)
    )

    # power-of-2 degree reduction: s C^(k-2) <= (2/k)(s^(k/2) + (k/2-1) C^k)
    lhs_list, rhs_list = [], []
    for k in (4, 8):
        m = trials // 2 + 1
        s = np.abs(g.standard_normal(m)) * scales(m)
        c = scales(m)
        lhs_list.append(s * c ** (k - 2))
        rhs_list.append((2.0 / k) * (s ** (k / 2.0) + (k / 2.0 - 1.0) * c**k))
    results.append(
        _tally(
            "power-of-2-reduction",
            np.concatenate(lhs_list),
            np.concatenate(rhs_list),
            trials,
        )
    )

    results.append(_factored_overlap_inequality(trials, g))
    return ToolkitReport(results=results)


def _factored_overlap_inequality(trials: int, g: np.random.Generator) -> InequalityResult:
    """Factored overlap inequality on random feasible assignments:

        a^k |mu - mu*|^2k <= 2^k k^(k/2) a^(k-1) |mu - mu*|^k

    with a the overlap fraction of two boolean selections, one tied to
    the ground truth, both sides' empirical k-th moments within the
    certifiable budget (trials failing a precondition are skipped, and
    the plain per-factor inequality is checked alongside)."""
    n = 12
    eps = 1.0 / 3.0
    count = n // 3
    evaluated = 0
    violations = 0
    worst = -math.inf
    for k in (2, 4):
        for _ in range(trials // 2 + 1):
            xstar = 0.6 * g.standard_normal(n)
            z = xstar.copy()
            bad = g.choice(n, size=count, replace=False)
            z[bad] += g.uniform(0.8, 2.0) * g.choice([-1.0, 1.0])
            wstar = np.ones(n)
            wstar[bad] = 0.0
            w = np.ones(n)
            w[g.choice(n, size=count, replace=False)] = 0.0
            x = z.copy()
            free = w == 0.0
            x[free] = 0.6 * g.standard_normal(int(free.sum()))
            mu = x.mean()
            mu_star = xstar.mean()
            budget = float(k) ** (k / 2.0)
            if np.mean((x - mu) ** k) > budget or np.mean((xstar - mu_star) ** k) > budget:
                continue
            evaluated += 1
            a = float(np.mean(w * wstar))
            gap = abs(mu - mu_star)
            lhs = a**k * gap ** (2 * k)
            rhs = 2.0**k * budget * a ** (k - 1) * gap**k
            scale = max(1.0, abs(lhs), abs(rhs))
            margin = (lhs - rhs) / scale
            # per-factor form: a gap^2k <= 2^k k^(k/2) gap^k
            margin2 = (a * gap ** (2 * k) - 2.0**k * budget * gap**k) / max(
                1.0, a * gap ** (2 * k)
            )
            margin = max(margin, margin2)
            worst = max(worst, margin)
            if margin > REL_SLACK:
                violations += 1
    return InequalityResult(
        name="factored-overlap",
        trials=trials,
        evaluated=evaluated,
        violations=violations,
        worst_margin=worst,
    )


# --- pseudo-expectation error-bound check -----------------------------------

@dataclass
class PeBoundReport:
    status: str  # "pass", "fail", or "skipped"
    value: float
    bound_optimal: float
    bound_breakdown: float
    precondition_eig: float
    precondition_budget: float
    details: dict = field(default_factory=dict)


def retained_moment_eig(zset: CorruptedSet, k: int) -> float:
    """Largest eigenvalue of the retained rows' (sum-normalized) k-th
    moment flattening about their own mean."""
    retained = zset.z[zset.mask_wstar]
    centered = retained - retained.mean(axis=0)
    if k == 2:
        mat = centered.T @ centered
    else:
        q = np.einsum("is,it->ist", centered, centered).reshape(centered.shape[0], -1)
        mat = q.T @ q
    return float(np.linalg.eigvalsh(mat)[-1])


def check_pe_error_bound(
    pe,
    transform: tuple[np.ndarray, float],
    zset: CorruptedSet,
    sigma: float,
    k: int,
    tol: float = 1e-6,
) -> PeBoundReport:
    """Compare E~[||mu - mu*||^2] against the certified budgets.

    mu* is the retained rows' mean (the observable stand-in for the
    clean sample mean).  The precondition that the retained rows'
    empirical k-th moments fit the assumed budget is verified first;
    failing it yields status 'skipped', not 'fail'.
    """
    from sosmean.estimators import pe_squared_distance

    eps = zset.epsilon
    budget = (sigma**2 if k == 2 else float(k ** (k // 2))) * zset.n
    eig = retained_moment_eig(zset, k)
    bound_opt = (
        BoundFormulas.bounded_cov_optimal(eps)
        if k == 2
        else BoundFormulas.kmoment_optimal(eps, k)
    ) * sigma**2
    bound_break = (
        BoundFormulas.bounded_cov_breakdown(eps)
        if k == 2
        else BoundFormulas.kmoment_breakdown(eps, k)
    ) * sigma**2
    if eig > budget:
        return PeBoundReport(
            status="skipped",
            value=math.nan,
            bound_optimal=bound_opt,
            bound_breakdown=bound_break,
            precondition_eig=eig,
            precondition_budget=budget,
            details={"reason": "retained rows violate the moment precondition"},
        )
    mu_star = zset.retained_mean()
    value = pe_squared_distance(pe, transform, mu_star)
    passed = value <= bound_opt + 100.0 * tol
    return PeBoundReport(
        status="pass" if passed else "fail",
        value=value,
        bound_optimal=bound_opt,
        bound_breakdown=bound_break,
        precondition_eig=eig,
        precondition_budget=budget,
        details={"anchor": [float(x) for x in mu_star]},
    )
