import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sosmean.adversary import (
    ClusterAtScaledSpike,
    Identity,
    MixtureSimulation,
    ReplaceWithPoint,
    corrupt,
    mixture_tv_contamination,
    parse_strategy,
    scaled_spike_location,
)
from sosmean.certify import lb_bounded_moment_pair, check_feasibility_identities
from sosmean.distributions import (
    GaussianIdentity,
    TwoPointMixture,
    sample,
)


def make_sample(n=10, d=1, seed=0):
    return sample(GaussianIdentity(mean=(0.0,) * d), n, seed)


def test_eps_zero_is_identity():
    s = make_sample(20)
    cs = corrupt(s, 0.0, ReplaceWithPoint(location=(100.0,)), seed=1)
    assert np.array_equal(cs.z, s.data)
    assert cs.mask_wstar.all()


def test_eps_at_half_rejected():
    s = make_sample()
    with pytest.raises(ValueError):
        corrupt(s, 0.5, Identity(), seed=1)


def test_exact_floor_count_replacement():
    s = make_sample(10)
    cs = corrupt(s, 0.4, ReplaceWithPoint(location=(100.0,)), seed=2)
    assert (cs.z[:, 0] == 100.0).sum() == 4
    assert (~cs.mask_wstar).sum() == 4
    assert np.array_equal(cs.z[cs.mask_wstar], s.data[cs.mask_wstar])


def test_identity_strategy_never_modifies():
    s = make_sample(10)
    cs = corrupt(s, 0.4, Identity(), seed=3)
    assert np.array_equal(cs.z, s.data)
    assert cs.mask_wstar.all()


def test_replacement_shifts_mean_by_arithmetic():
    n, big = 10_000, 50.0
    s = make_sample(n, seed=5)
    cs = corrupt(s, 0.3, ReplaceWithPoint(location=(big,)), seed=6)
    assert abs(cs.z.mean() - 0.3 * big) <= 0.01 * big


def test_cluster_spike_location():
    eps, k = 0.3, 2
    s = make_sample(10, seed=7)
    cs = corrupt(s, eps, ClusterAtScaledSpike(k=k), seed=8)
    expected = math.sqrt(k) * (2 * eps * (1 - 2 * eps)) ** (-1.0 / k)
    replaced = cs.z[~cs.mask_wstar]
    assert np.allclose(replaced, expected)
    assert scaled_spike_location(eps, k) == pytest.approx(expected)


def test_mixture_strategy_draws_from_alt():
    s = make_sample(40, seed=9)
    alt = TwoPointMixture(base=-7.0, spike=-7.0, prob=0.0)
    cs = corrupt(s, 0.25, MixtureSimulation(alt=alt), seed=10)
    assert (cs.z[:, 0] == -7.0).sum() == 10


@settings(max_examples=50, deadline=None)
@given(
    st.integers(min_value=2, max_value=30),
    st.floats(min_value=0.0, max_value=0.49),
    st.integers(min_value=0, max_value=10_000),
)
def test_mask_consistency_property(n, eps, seed):
    s = make_sample(n, seed=seed)
    cs = corrupt(s, eps, ReplaceWithPoint(location=(1e6,)), seed=seed + 1)
    changed = ~np.all(cs.z == s.data, axis=1)
    # changed rows are exactly flagged corrupted; count at most floor(eps n)
    assert not np.any(changed & cs.mask_wstar)
    assert (~cs.mask_wstar).sum() <= math.floor(eps * n)
    assert cs.mask_wstar.sum() >= (1 - eps) * n - 1e-9


def test_overlap_aggregate_for_feasible_selections():
    # any boolean selection with the mass constraint overlaps the ground
    # truth on at least a 1-2eps fraction
    n, eps = 10, 0.4
    s = make_sample(n, seed=11)
    cs = corrupt(s, eps, ReplaceWithPoint(location=(9.0,)), seed=12)
    w_star = cs.mask_wstar.astype(int)
    rep = check_feasibility_identities(cs, w_star)
    assert rep.all_ok and rep.overlap_fraction >= 1 - eps

    all_ones = np.ones(n, dtype=int)
    rep2 = check_feasibility_identities(cs, all_ones)
    assert rep2.all_ok

    rng = np.random.default_rng(0)
    for _ in range(25):
        w = np.ones(n, dtype=int)
        w[rng.choice(n, size=4, replace=False)] = 0
        rep3 = check_feasibility_identities(cs, w)
        assert rep3.miss_fraction <= 2 * eps + 1e-12
        assert rep3.overlap_fraction >= 1 - 2 * eps - 1e-12


def test_mixture_tv_eps_zero_is_plain_sample():
    d1 = TwoPointMixture(base=0.0, spike=1.0, prob=0.0)
    cs = mixture_tv_contamination(d1, d1, 0.0, 50, seed=1)
    assert cs.mask_wstar.all()


def test_mixture_tv_identical_components():
    d1 = GaussianIdentity(mean=(0.0,))
    cs = mixture_tv_contamination(d1, d1, 0.25, 200, seed=2)
    assert (~cs.mask_wstar).sum() == 50
    # replaced rows are fresh standard normal draws, not the originals
    assert not np.array_equal(cs.z, cs.origin.data)


def test_mixture_tv_matches_mixture_mean_oracle():
    # half of the lower-bound pair's gap, within 0.01
    eps, k, n = 0.25, 2, 1_000_000
    pair = lb_bounded_moment_pair(eps, k)
    cs = mixture_tv_contamination(pair.d1, pair.d2, eps, n, seed=3)
    assert abs(cs.z.mean() - 0.5 * pair.mean_gap) <= 0.01
    assert (~cs.mask_wstar).sum() == int(eps * n)


def test_mixture_tv_rejects_distant_pairs():
    d1 = TwoPointMixture(base=0.0, spike=1.0, prob=0.0)
    d2 = TwoPointMixture(base=0.0, spike=1.0, prob=0.9)
    with pytest.raises(ValueError):
        mixture_tv_contamination(d1, d2, 0.1, 100, seed=4)


def test_gaussian_mixture_contamination_moments():
    # observed set should resemble the balanced two-Gaussian mixture
    from sosmean.certify import lb_gaussian_pair

    pair = lb_gaussian_pair(0.45)
    n = 40_000
    cs = mixture_tv_contamination(pair.d1, pair.d2, 0.45, n, seed=5)
    gap = pair.mean_gap
    assert abs(cs.z.mean() - gap / 2) <= 0.05 * max(1.0, gap)
    assert (~cs.mask_wstar).sum() == int(0.45 * n)


def test_parse_strategy_strings():
    assert parse_strategy("identity") == Identity()
    assert parse_strategy("replace-point:loc=100", d=2) == ReplaceWithPoint(
        location=(100.0, 100.0)
    )
    assert parse_strategy("cluster-spike:k=4,axis=1") == ClusterAtScaledSpike(k=4, axis=1)
    strat = parse_strategy("mixture:alt=two-point|base=0|spike=5|prob=0.5")
    assert isinstance(strat, MixtureSimulation)
    with pytest.raises(ValueError):
        parse_strategy("petulant")
