"""Strong-contamination adversaries.

`corrupt` replaces exactly floor(eps*n) rows of a sample (indices chosen
uniformly by seed) according to a strategy; the ground-truth retention
mask travels with the output.  Using the maximum allowed count makes
every instance the hardest of its class and keeps counts testable.

`mixture_tv_contamination` implements the indistinguishability adversary:
when two distributions are within 2*eps in total variation, replacing an
eps fraction of draws from the first can make the observed set look like
an i.i.d. sample from the balanced mixture of the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr

from sosmean.distributions import (
    DistributionSpec,
    GaussianIdentity,
    GaussianSpikeMixture,
    SampleSet,
    TwoPointMixture,
    dim,
    nominal_scale,
    rng,
    sample,
    spec_from_dict,
    spec_to_dict,
)


@dataclass(frozen=True)
class ReplaceWithPoint:
    """All corrupted rows moved to one fixed location."""

    location: tuple[float, ...]

    def __post_init__(self):
        loc = tuple(float(x) for x in self.location)
        if not all(math.isfinite(x) for x in loc):
            raise ValueError("location must be finite")
        object.__setattr__(self, "location", loc)


@dataclass(frozen=True)
class MixtureSimulation:
    """Corrupted rows are fresh draws from an alternative distribution."""

    alt: DistributionSpec


@dataclass(frozen=True)
class ClusterAtScaledSpike:
    """Corrupted rows placed at the extremal bounded-moment spike.

    The spike sits at sqrt(k) * (2*eps*(1-2*eps))**(-1/k) scale units from
    the population mean along one coordinate axis: the location that
    saturates the k-th moment budget of the matching lower-bound pair.
    """

    k: int = 2
    axis: int = 0

    def __post_init__(self):
        if self.k < 2 or self.k % 2 != 0:
            raise ValueError("k must be an even integer >= 2")
        if self.axis < 0:
            raise ValueError("axis must be nonnegative")


@dataclass(frozen=True)
class Identity:
    """No-op adversary; keeps every row regardless of eps."""


AdversaryStrategy = Union[ReplaceWithPoint, MixtureSimulation, ClusterAtScaledSpike, Identity]


def scaled_spike_location(eps: float, k: int) -> float:
    """Spike offset (in scale units) of the bounded-moment lower-bound pair."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    return math.sqrt(k) * (2.0 * eps * (1.0 - 2.0 * eps)) ** (-1.0 / k)


@dataclass(frozen=True)
class CorruptedSet:
    """Observed rows, the ground-truth retention mask, and the origin."""

    z: np.ndarray
    mask_wstar: np.ndarray
    epsilon: float
    origin: SampleSet
    strategy: str = "unknown"

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).copy()
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        mask = np.asarray(self.mask_wstar, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask_wstar", mask)
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must lie in [0, 1/2)")
        if z.shape != self.origin.data.shape:
            raise ValueError("z must have the origin's shape")
        if mask.shape != (z.shape[0],):
            raise ValueError("mask must have one flag per row")
        if not np.array_equal(z[mask], self.origin.data[mask]):
            raise ValueError("retained rows must agree with the origin exactly")
        if mask.sum() < (1.0 - self.epsilon) * z.shape[0] - 1e-9:
            raise ValueError("mask retains fewer than (1-eps) n rows")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def retained_mean(self) -> np.ndarray:
        return self.z[self.mask_wstar].mean(axis=0)

    def num_corrupted(self) -> int:
        return int(self.n - self.mask_wstar.sum())


def corrupt(
    s: SampleSet, eps: float, strategy: AdversaryStrategy, seed: int
) -> CorruptedSet:
    """Replace exactly floor(eps*n) uniformly chosen rows per the strategy."""
    if not 0.0 <= eps < 0.5:
        raise ValueError("eps >= 1/2 exceeds the identifiability threshold")
    n, d = s.data.shape
    z = s.data.copy()
    mask = np.ones(n, dtype=bool)
    count = int(math.floor(eps * n))
    if count > 0 and not isinstance(strategy, Identity):
        g = rng(seed, stream=1)
        idx = g.choice(n, size=count, replace=False)
        idx.sort()
        if isinstance(strategy, ReplaceWithPoint):
            loc = np.asarray(strategy.location, dtype=float)
            if loc.shape != (d,):
                raise ValueError("location dimension mismatch")
            z[idx] = loc
        elif isinstance(strategy, MixtureSimulation):
            if dim(strategy.alt) != d:
                raise ValueError("alternative distribution dimension mismatch")
            z[idx] = sample(strategy.alt, count, seed=int(g.integers(2**62))).data
        elif isinstance(strategy, ClusterAtScaledSpike):
            if strategy.axis >= d:
                raise ValueError("spike axis out of range")
            scale = nominal_scale(s.spec) if s.spec is not None else 1.0
            loc = s.true_mean.astype(float).copy()
            loc[strategy.axis] += scale * scaled_spike_location(eps, strategy.k)
            z[idx] = loc
        else:
            raise TypeError(f"unknown strategy {strategy!r}")
        # rows that happen to coincide with the original stay marked corrupted:
        # the mask records which rows the adversary touched
        mask[idx] = False
    return CorruptedSet(
        z=z,
        mask_wstar=mask,
        epsilon=eps,
        origin=s,
        strategy=strategy_name(strategy),
    )


def strategy_name(strategy: AdversaryStrategy) -> str:
    if isinstance(strategy, ReplaceWithPoint):
        return "replace-point"
    if isinstance(strategy, MixtureSimulation):
        return "mixture"
    if isinstance(strategy, ClusterAtScaledSpike):
        return f"cluster-spike(k={strategy.k})"
    return "identity"


def parse_strategy(text: str, d: int = 1) -> AdversaryStrategy:
    """CLI strategy strings: 'identity', 'replace-point:loc=100',
    'cluster-spike:k=2,axis=0', 'mixture:alt=two-point|base=0|spike=5|prob=0.5'."""
    name, _, arg_str = text.partition(":")
    kwargs: dict[str, str] = {}
    if arg_str:
        for item in arg_str.split(","):
            key, _, value = item.partition("=")
            kwargs[key.strip()] = value.strip()
    if name == "identity":
        return Identity()
    if name == "replace-point":
        raw = kwargs.get("loc", "0")
        vals = [float(x) for x in raw.split(";")]
        loc = tuple(vals) if len(vals) > 1 else (vals[0],) * d
        return ReplaceWithPoint(location=loc)
    if name == "cluster-spike":
        return ClusterAtScaledSpike(
            k=int(kwargs.get("k", 2)), axis=int(kwargs.get("axis", 0))
        )
    if name == "mixture":
        alt = kwargs.get("alt")
        if alt is None:
            raise ValueError("mixture strategy needs alt=<spec>")
        return MixtureSimulation(alt=_parse_nested_spec(alt, d))
    raise ValueError(f"unknown strategy {name!r}")


def _parse_nested_spec(text: str, d: int) -> DistributionSpec:
    # nested specs use '|' where the outer strategy string uses ':' and ','
    from sosmean.distributions import parse_spec

    return parse_spec(text.replace("|", ":", 1).replace("|", ","), d=d)


def _mixture_pair_tv(d1: DistributionSpec, d2: DistributionSpec) -> float | None:
    """Closed-form TV for the pair families this adversary supports."""
    if d1 == d2:
        return 0.0
    if (
        isinstance(d1, TwoPointMixture)
        and isinstance(d2, TwoPointMixture)
        and d1.base == d2.base
        and d1.prob == 0.0
    ):
        return d2.prob
    if (
        isinstance(d1, GaussianIdentity)
        and isinstance(d2, GaussianSpikeMixture)
        and d1.mean == (d2.gauss_mean,)
    ):
        return d2.prob
    if isinstance(d1, GaussianIdentity) and isinstance(d2, GaussianIdentity):
        gap = abs(d1.mean[0] - d2.mean[0])
        return float(2.0 * ndtr(gap / 2.0) - 1.0)
    return None


def mixture_tv_contamination(
    d1: DistributionSpec, d2: DistributionSpec, eps: float, n: int, seed: int
) -> CorruptedSet:
    """Corrupt an i.i.d. D1 sample so the observed set mimics (D1+D2)/2.

    Exactly floor(eps*n) rows are replaced, so the output is the
    fixed-count version of the mixture (conditioned replacement count).
    Requires d_TV(D1, D2) <= 2*eps and 1-D specs from the supported
    families (point mixtures sharing their base, spiked Gaussians over
    their base Gaussian, or two unit-variance Gaussians).
    """
    if not 0.0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 1/2)")
    if dim(d1) != 1 or dim(d2) != 1:
        raise ValueError("only 1-D pairs are supported")
    base = sample(d1, n, seed)
    if eps == 0.0:
        return CorruptedSet(
            z=base.data,
            mask_wstar=np.ones(n, dtype=bool),
            epsilon=0.0,
            origin=base,
            strategy="mixture-tv",
        )
    tv = _mixture_pair_tv(d1, d2)
    if tv is None:
        raise ValueError("unsupported pair for mixture contamination")
    if tv > 2.0 * eps + 1e-9:
        raise ValueError("d_TV(D1, D2) exceeds 2*eps; mixture not reachable")
    count = int(math.floor(eps * n))
    g = rng(seed, stream=2)
    z = base.data.copy()
    mask = np.ones(n, dtype=bool)
    if d1 == d2:
        idx = g.choice(n, size=count, replace=False)
        fresh = sample(d1, count, seed=int(g.integers(2**62))).data
        z[idx] = fresh
        mask[idx] = False
    elif isinstance(d2, (TwoPointMixture, GaussianSpikeMixture)):
        # (D1+D2)/2 puts prob/2 mass on the spike and the rest on D1
        idx = g.choice(n, size=count, replace=False)
        z[idx] = d2.spike
        mask[idx] = False
    else:
        # two unit-variance Gaussians: a D1 draw is kept with probability
        # min(1, mixture/phi_1); sequential Poisson ranking realizes the
        # thinning with exactly `count` removals
        m1, m2 = d1.mean[0], d2.mean[0]
        x = base.data[:, 0]
        log_ratio = np.clip((x - m1) ** 2 / 2 - (x - m2) ** 2 / 2, -60.0, 60.0)
        keep_prob = np.minimum(1.0, 0.5 * (1.0 + np.exp(log_ratio)))
        discard_prob = np.maximum(1.0 - keep_prob, 1e-300)
        score = g.random(n) / discard_prob
        idx = np.sort(np.argsort(score, kind="stable")[:count])
        fill = _sample_excess_gaussian(m1, m2, count, g)
        z[idx, 0] = fill
        mask[idx] = False
    return CorruptedSet(
        z=z, mask_wstar=mask, epsilon=eps, origin=base, strategy="mixture-tv"
    )


def _sample_excess_gaussian(m1: float, m2: float, count: int, g: np.random.Generator) -> np.ndarray:
    """Draw from the normalized positive part of (phi_m2 - phi_m1)/2 by
    rejection from N(m2, 1) restricted to its overweight half."""
    out = np.empty(count)
    filled = 0
    while filled < count:
        cand = m2 + g.standard_normal(2 * (count - filled) + 8)
        log_ratio = np.clip((cand - m2) ** 2 / 2 - (cand - m1) ** 2 / 2, -60.0, 60.0)
        accept = g.random(cand.shape[0]) < np.clip(1.0 - np.exp(log_ratio), 0.0, 1.0)
        take = cand[accept][: count - filled]
        out[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
    return out


def corrupted_to_dict(cs: CorruptedSet) -> dict:
    """Sidecar payload for file round-trips (mask, eps, origin summary)."""
    payload = {
        "epsilon": cs.epsilon,
        "strategy": cs.strategy,
        "mask_wstar": [int(b) for b in cs.mask_wstar],
        "origin_empirical_mean": [float(x) for x in cs.origin.empirical_mean],
        "origin_true_mean": [float(x) for x in cs.origin.true_mean],
        "origin_seed": cs.origin.seed,
    }
    if cs.origin.spec is not None:
        payload["origin_spec"] = spec_to_dict(cs.origin.spec)
    return payload


def corrupted_from_arrays(
    z: np.ndarray, origin_data: np.ndarray, payload: dict
) -> CorruptedSet:
    origin = SampleSet(
        data=origin_data,
        true_mean=np.asarray(payload["origin_true_mean"], dtype=float),
        empirical_mean=np.asarray(origin_data, dtype=float).mean(axis=0),
        seed=int(payload.get("origin_seed", 0)),
        spec=spec_from_dict(payload["origin_spec"]) if "origin_spec" in payload else None,
    )
    return CorruptedSet(
        z=z,
        mask_wstar=np.asarray(payload["mask_wstar"], dtype=bool),
        epsilon=float(payload["epsilon"]),
        origin=origin,
        strategy=payload.get("strategy", "unknown"),
    )
