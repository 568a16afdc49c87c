"""Synthetic sample generation for the distribution families under study.

Four one-parameter families cover everything the estimators and the
lower-bound verifiers need: an identity-covariance Gaussian, two bounded
covariance shapes whose population covariance operator norm is sigma^2 by
construction, a two-point mixture (point mass when prob=0), and a
Gaussian contaminated by a point spike.

All randomness goes through the counter-based Philox-4x64-10 generator so
sample sets are reproducible from (spec, n, seed) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


def rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream); distinct streams are
    statistically independent for the same seed."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class GaussianIdentity:
    """N(mean, I_d)."""

    mean: tuple[float, ...]

    def __post_init__(self):
        if len(self.mean) < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))


@dataclass(frozen=True)
class BoundedCovariance:
    """Family with population covariance <= sigma^2 * I in operator norm.

    shape 'gaussian-scaled': mean + sigma * N(0, I); covariance sigma^2 I.
    shape 'uniform-ball': uniform on the ball of radius sigma*sqrt(d+2),
    whose covariance is exactly sigma^2 I.
    """

    mean: tuple[float, ...]
    sigma: float
    shape: str = "gaussian-scaled"

    def __post_init__(self):
        if len(self.mean) < 1:
            raise ValueError("dimension must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.shape not in ("gaussian-scaled", "uniform-ball"):
            raise ValueError(f"unknown shape {self.shape!r}")
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))


@dataclass(frozen=True)
class TwoPointMixture:
    """1-D mixture: base with prob 1-p, spike with prob p."""

    base: float
    spike: float
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("spike probability must lie in [0, 1]")
        if not (math.isfinite(self.base) and math.isfinite(self.spike)):
            raise ValueError("locations must be finite")


@dataclass(frozen=True)
class GaussianSpikeMixture:
    """1-D mixture: N(gauss_mean, 1) with prob 1-p, point spike with prob p."""

    gauss_mean: float
    spike: float
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("spike probability must lie in [0, 1]")
        if not (math.isfinite(self.gauss_mean) and math.isfinite(self.spike)):
            raise ValueError("locations must be finite")


DistributionSpec = Union[
    GaussianIdentity, BoundedCovariance, TwoPointMixture, GaussianSpikeMixture
]


def dim(spec: DistributionSpec) -> int:
    if isinstance(spec, (GaussianIdentity, BoundedCovariance)):
        return len(spec.mean)
    return 1


def population_mean(spec: DistributionSpec) -> np.ndarray:
    if isinstance(spec, (GaussianIdentity, BoundedCovariance)):
        return np.asarray(spec.mean, dtype=float)
    if isinstance(spec, TwoPointMixture):
        return np.array([(1.0 - spec.prob) * spec.base + spec.prob * spec.spike])
    return np.array([(1.0 - spec.prob) * spec.gauss_mean + spec.prob * spec.spike])


def population_variance_1d(spec: DistributionSpec) -> float:
    """Exact variance of a 1-D spec (mixtures via the law of total variance)."""
    if dim(spec) != 1:
        raise ValueError("only 1-D specs")
    if isinstance(spec, GaussianIdentity):
        return 1.0
    if isinstance(spec, BoundedCovariance):
        return spec.sigma**2
    m = float(population_mean(spec)[0])
    if isinstance(spec, TwoPointMixture):
        return (1 - spec.prob) * (spec.base - m) ** 2 + spec.prob * (spec.spike - m) ** 2
    return (1 - spec.prob) * (1.0 + (spec.gauss_mean - m) ** 2) + spec.prob * (
        spec.spike - m
    ) ** 2


def nominal_scale(spec: DistributionSpec) -> float:
    """Scale parameter the adversary uses when placing scaled spikes."""
    if isinstance(spec, BoundedCovariance):
        return spec.sigma
    return 1.0


@dataclass(frozen=True)
class SampleSet:
    """Immutable i.i.d. sample with both population and empirical mean.

    Error metrics downstream default to the empirical mean: the targets
    the estimators are analyzed against are sample means of the
    uncorrupted draws, not the population mean.
    """

    data: np.ndarray
    true_mean: np.ndarray
    empirical_mean: np.ndarray
    seed: int
    spec: DistributionSpec | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("data must be an (n, d) matrix with n, d >= 1")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "true_mean", np.asarray(self.true_mean, dtype=float))
        emp = np.asarray(self.empirical_mean, dtype=float)
        object.__setattr__(self, "empirical_mean", emp)
        if not np.allclose(emp, data.mean(axis=0), rtol=0, atol=1e-12):
            raise ValueError("empirical_mean does not match the column average")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def sample(spec: DistributionSpec, n: int, seed: int) -> SampleSet:
    """Draw n i.i.d. rows; deterministic for fixed (spec, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng(seed)
    d = dim(spec)
    if isinstance(spec, GaussianIdentity):
        data = np.asarray(spec.mean) + g.standard_normal((n, d))
    elif isinstance(spec, BoundedCovariance):
        if spec.shape == "gaussian-scaled":
            data = np.asarray(spec.mean) + spec.sigma * g.standard_normal((n, d))
        else:
            radius = spec.sigma * math.sqrt(d + 2)
            direc = g.standard_normal((n, d))
            direc /= np.linalg.norm(direc, axis=1, keepdims=True)
            radii = radius * g.random(n) ** (1.0 / d)
            data = np.asarray(spec.mean) + direc * radii[:, None]
    elif isinstance(spec, TwoPointMixture):
        hits = g.random(n) < spec.prob
        data = np.where(hits, spec.spike, spec.base)[:, None].astype(float)
    else:
        hits = g.random(n) < spec.prob
        gauss = spec.gauss_mean + g.standard_normal(n)
        data = np.where(hits, spec.spike, gauss)[:, None]
    return SampleSet(
        data=data,
        true_mean=population_mean(spec),
        empirical_mean=data.mean(axis=0),
        seed=seed,
        spec=spec,
    )


def empirical_covariance_opnorm(s: SampleSet | np.ndarray) -> float:
    """Largest eigenvalue of the (1/n-normalized) empirical covariance."""
    data = s.data if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / n
    return float(np.linalg.eigvalsh(cov)[-1])


# --- spec <-> string / dict, for the CLI and sidecar files -----------------

def spec_to_dict(spec: DistributionSpec) -> dict:
    if isinstance(spec, GaussianIdentity):
        return {"family": "gaussian", "mean": list(spec.mean)}
    if isinstance(spec, BoundedCovariance):
        return {
            "family": "bounded-cov",
            "mean": list(spec.mean),
            "sigma": spec.sigma,
            "shape": spec.shape,
        }
    if isinstance(spec, TwoPointMixture):
        return {
            "family": "two-point",
            "base": spec.base,
            "spike": spec.spike,
            "prob": spec.prob,
        }
    return {
        "family": "gauss-spike",
        "gauss_mean": spec.gauss_mean,
        "spike": spec.spike,
        "prob": spec.prob,
    }


def spec_from_dict(payload: dict) -> DistributionSpec:
    family = payload["family"]
    if family == "gaussian":
        return GaussianIdentity(mean=tuple(payload["mean"]))
    if family == "bounded-cov":
        return BoundedCovariance(
            mean=tuple(payload["mean"]),
            sigma=float(payload["sigma"]),
            shape=payload.get("shape", "gaussian-scaled"),
        )
    if family == "two-point":
        return TwoPointMixture(
            base=float(payload["base"]),
            spike=float(payload["spike"]),
            prob=float(payload["prob"]),
        )
    if family == "gauss-spike":
        return GaussianSpikeMixture(
            gauss_mean=float(payload["gauss_mean"]),
            spike=float(payload["spike"]),
            prob=float(payload["prob"]),
        )
    raise ValueError(f"unknown family {family!r}")


def parse_spec(text: str, d: int = 1) -> DistributionSpec:
    """Parse CLI spec strings like 'gaussian:mean=0' or
    'bounded-cov:sigma=2,shape=uniform-ball' or
    'two-point:base=0,spike=5,prob=0.1'."""
    name, _, arg_str = text.partition(":")
    kwargs: dict[str, str] = {}
    if arg_str:
        for item in arg_str.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"malformed spec argument {item!r}")
            kwargs[key.strip()] = value.strip()
    def mean_vec(default=0.0):
        raw = kwargs.get("mean")
        if raw is None:
            return (float(default),) * d
        vals = [float(x) for x in raw.split(";")]
        return tuple(vals) if len(vals) > 1 else (vals[0],) * d

    if name == "gaussian":
        return GaussianIdentity(mean=mean_vec())
    if name == "bounded-cov":
        return BoundedCovariance(
            mean=mean_vec(),
            sigma=float(kwargs.get("sigma", 1.0)),
            shape=kwargs.get("shape", "gaussian-scaled"),
        )
    if name == "two-point":
        return TwoPointMixture(
            base=float(kwargs.get("base", 0.0)),
            spike=float(kwargs.get("spike", 0.0)),
            prob=float(kwargs.get("prob", 0.0)),
        )
    if name == "gauss-spike":
        return GaussianSpikeMixture(
            gauss_mean=float(kwargs.get("gauss_mean", 0.0)),
            spike=float(kwargs.get("spike", 0.0)),
            prob=float(kwargs.get("prob", 0.0)),
        )
    raise ValueError(f"unknown distribution family {name!r}")
