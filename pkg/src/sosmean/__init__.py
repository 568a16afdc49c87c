"""Robust mean estimation near the breakdown point, via sum-of-squares.

The package covers the whole pipeline at desk scale: synthetic data with
known moment bounds, strong-contamination adversaries, compilation of the
selector polynomial systems into moment-matrix relaxations, a projection
based conic solver producing numerically valid pseudo-expectations, the
rounded mean estimator with classical baselines, and exact verifiers for
the matching information-theoretic lower bounds.
"""

from sosmean.distributions import (
    BoundedCovariance,
    GaussianIdentity,
    GaussianSpikeMixture,
    SampleSet,
    TwoPointMixture,
    empirical_covariance_opnorm,
    sample,
)
from sosmean.adversary import (
    ClusterAtScaledSpike,
    CorruptedSet,
    Identity,
    MixtureSimulation,
    ReplaceWithPoint,
    corrupt,
    mixture_tv_contamination,
)

__all__ = [
    "BoundedCovariance",
    "GaussianIdentity",
    "GaussianSpikeMixture",
    "SampleSet",
    "TwoPointMixture",
    "empirical_covariance_opnorm",
    "sample",
    "ClusterAtScaledSpike",
    "CorruptedSet",
    "Identity",
    "MixtureSimulation",
    "ReplaceWithPoint",
    "corrupt",
    "mixture_tv_contamination",
]
