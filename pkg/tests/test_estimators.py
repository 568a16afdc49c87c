import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtri

from sosmean.adversary import CorruptedSet, Identity, ReplaceWithPoint, corrupt
from sosmean.distributions import GaussianIdentity, SampleSet, rng, sample
from sosmean.estimators import (
    EstimationError,
    certified_prune,
    coordinate_median,
    gaussian_projection_1d,
    geometric_median,
    lower_coordinate_median,
    norm_2k,
    sample_mean,
    sos_mean,
    sparse_truncate,
    weiszfeld,
)


def as_corrupted(data, eps=0.0):
    data = np.asarray(data, dtype=float)
    origin = SampleSet(
        data=data,
        true_mean=data.mean(axis=0),
        empirical_mean=data.mean(axis=0),
        seed=0,
    )
    return CorruptedSet(
        z=data,
        mask_wstar=np.ones(data.shape[0], dtype=bool),
        epsilon=eps,
        origin=origin,
    )


def test_mean_and_median_basic():
    cs = as_corrupted([[1.0], [2.0], [3.0]])
    assert sample_mean(cs).mu_hat[0] == pytest.approx(2.0)
    assert coordinate_median(cs).mu_hat[0] == pytest.approx(2.0)


def test_mean_fooled_median_not():
    cs = as_corrupted([[0.0], [0.0], [0.0], [1e6]])
    assert sample_mean(cs).mu_hat[0] == pytest.approx(250000.0)
    assert coordinate_median(cs).mu_hat[0] == pytest.approx(0.0)


def test_lower_median_tie_rule():
    cs = as_corrupted([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(coordinate_median(cs).mu_hat, np.array([0.0, 0.0]))


def test_geometric_median_square_symmetry():
    cs = as_corrupted([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert np.allclose(geometric_median(cs).mu_hat, [0.5, 0.5], atol=1e-7)


def test_geometric_median_collinear_is_median():
    cs = as_corrupted([[0.0], [1.0], [10.0]])
    assert geometric_median(cs).mu_hat[0] == pytest.approx(1.0, abs=1e-7)


def test_geometric_median_identical_points():
    cs = as_corrupted([[2.5, -1.0]] * 5)
    assert np.allclose(geometric_median(cs).mu_hat, [2.5, -1.0])


def fermat_objective(points, candidate):
    return np.linalg.norm(points - candidate, axis=1).sum()


def test_geometric_median_fermat_point_vs_grid_oracle():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    est = weiszfeld(pts, tol=1e-12)
    # two-stage exhaustive grid oracle at resolution 1e-4
    coarse = np.arange(0.0, 1.0 + 1e-9, 2e-3)
    gx, gy = np.meshgrid(coarse, coarse, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vals = np.linalg.norm(grid[:, None, :] - pts[None, :, :], axis=2).sum(axis=1)
    center = grid[int(np.argmin(vals))]
    fine = np.arange(-4e-3, 4e-3 + 1e-12, 1e-4)
    fx, fy = np.meshgrid(center[0] + fine, center[1] + fine, indexing="ij")
    fgrid = np.stack([fx.ravel(), fy.ravel()], axis=1)
    fvals = np.linalg.norm(fgrid[:, None, :] - pts[None, :, :], axis=2).sum(axis=1)
    oracle = fgrid[int(np.argmin(fvals))]
    assert np.linalg.norm(est - oracle) <= 2e-4
    assert fermat_objective(pts, est) <= fermat_objective(pts, oracle) + 1e-9


def test_gaussian_projection_exact_quantiles():
    n = 200
    levels = (np.arange(1, n + 1) - 0.5) / n
    z = 3.0 + ndtri(levels)
    rep = gaussian_projection_1d(z, grid_halfwidth=2.0, grid_step=0.002)
    assert abs(rep.mu_hat[0] - 3.0) <= 0.002 + 1e-12


def test_gaussian_projection_clean_sample():
    s = sample(GaussianIdentity(mean=(0.0,)), 10_000, seed=17)
    rep = gaussian_projection_1d(s.data[:, 0], grid_halfwidth=1.0, grid_step=0.005)
    assert abs(rep.mu_hat[0]) <= 0.05


def test_gaussian_projection_empty_grid_rejected():
    with pytest.raises(ValueError):
        gaussian_projection_1d(np.zeros(5), grid_halfwidth=1.0, grid_step=0.0)


def test_sparse_truncate_examples():
    out = sparse_truncate([3.0, -1.0, 2.0], 2)
    assert np.array_equal(out, [3.0, 0.0, 2.0])
    assert norm_2k([3.0, -1.0, 2.0], 2) == pytest.approx(math.sqrt(13.0))
    x = np.array([1.0, -4.0, 2.0, 0.5])
    assert np.array_equal(sparse_truncate(x, 4), x)
    assert norm_2k(x, 4) == pytest.approx(np.linalg.norm(x))
    # tie: equal magnitudes keep the lowest index
    assert np.array_equal(sparse_truncate([2.0, -2.0, 1.0], 1), [2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        sparse_truncate(x, 0)
    with pytest.raises(ValueError):
        norm_2k(x, 5)


def test_norm_2k_equals_sparse_direction_maximum():
    g = rng(5)
    for _ in range(50):
        d = int(g.integers(2, 9))
        k = int(g.integers(1, d + 1))
        x = g.standard_normal(d) * 10.0 ** g.uniform(-2, 2)
        best = 0.0
        for support in itertools.combinations(range(d), k):
            sub = x[list(support)]
            best = max(best, float(np.linalg.norm(sub)))
        assert norm_2k(x, k) == pytest.approx(best, rel=1e-12)


def test_truncation_three_approximation_property():
    g = rng(6)
    violations = 0
    for _ in range(10_000):
        d = int(g.integers(2, 10))
        k = int(g.integers(1, d + 1))
        x = g.standard_normal(d) * 10.0 ** g.uniform(-3, 3)
        a = np.zeros(d)
        support = g.choice(d, size=k, replace=False)
        a[support] = g.standard_normal(k) * 10.0 ** g.uniform(-3, 3)
        lhs = np.linalg.norm(sparse_truncate(x, k) - a)
        rhs = 3.0 * norm_2k(x - a, k)
        if lhs > rhs * (1 + 1e-12):
            violations += 1
    assert violations == 0


def test_certified_prune_never_drops_selectable_points():
    g = rng(8)
    for _ in range(50):
        n = int(g.integers(6, 16))
        pts = g.standard_normal((n, 2))
        mass = (1 - 0.25) * n
        keep = certified_prune(pts, mass)
        m0 = int(math.ceil(mass))
        # brute-force: any subset of size >= m0 with the moment budget n
        for _ in range(30):
            size = int(g.integers(m0, n + 1))
            sel = g.choice(n, size=size, replace=False)
            sub = pts[sel]
            mu = sub.mean(axis=0)
            centered = sub - mu
            if np.linalg.eigvalsh(centered.T @ centered)[-1] <= n:
                assert keep[sel].all()


def test_sos_mean_clean_small():
    s = sample(GaussianIdentity(mean=(0.0,)), 20, seed=1)
    cs = corrupt(s, 0.0, Identity(), seed=2)
    rep = sos_mean(cs, sigma=1.5, k=2, r=2, tol=1e-6, max_iter=30_000)
    assert rep.error <= 0.2
    assert rep.status == "solved"


def test_sos_mean_single_sample_pins_mu():
    s = sample(GaussianIdentity(mean=(4.0,)), 1, seed=3)
    cs = corrupt(s, 0.0, Identity(), seed=4)
    rep = sos_mean(cs, sigma=1.0, k=2, r=2, tol=1e-8, max_iter=20_000)
    assert rep.mu_hat[0] == pytest.approx(cs.z[0, 0], abs=1e-6)


def test_sos_mean_far_outliers_bounded_error():
    s = sample(GaussianIdentity(mean=(0.0,)), 20, seed=5)
    cs = corrupt(s, 0.4, ReplaceWithPoint(location=(1000.0,)), seed=6)
    rep = sos_mean(cs, sigma=1.1, k=2, r=2, tol=1e-6, max_iter=30_000)
    bound = math.sqrt(8 * 0.4 / 0.2) * 1.1 + 0.5
    assert rep.error <= bound
    assert rep.details["pruned_rows"] == 8


def test_sos_mean_rounding_inequality():
    # ||E~[mu] - c||^2 <= E~[||mu - c||^2] + slack for arbitrary anchors c
    from sosmean.adversary import ClusterAtScaledSpike

    s = sample(GaussianIdentity(mean=(0.0,)), 14, seed=7)
    cs = corrupt(s, 0.2, ClusterAtScaledSpike(k=2), seed=8)
    rep = sos_mean(cs, sigma=1.2, k=2, r=2, tol=1e-6, max_iter=60_000)
    from sosmean.estimators import pe_squared_distance

    g = rng(9)
    for _ in range(20):
        c = g.standard_normal(1) * 3.0
        lhs = float(np.linalg.norm(rep.mu_hat - c) ** 2)
        rhs = pe_squared_distance(rep.pe, rep.transform, c)
        assert lhs <= rhs + 1e-4 * (1.0 + abs(rhs))


def test_sos_mean_translation_equivariance():
    s = sample(GaussianIdentity(mean=(0.0,)), 16, seed=10)
    cs = corrupt(s, 0.25, ReplaceWithPoint(location=(50.0,)), seed=11)
    rep = sos_mean(cs, sigma=1.2, k=2, r=2, tol=1e-6, max_iter=40_000)
    shift = np.array([13.25])
    shifted_origin = SampleSet(
        data=s.data + shift,
        true_mean=s.true_mean + shift,
        empirical_mean=(s.data + shift).mean(axis=0),
        seed=s.seed,
    )
    shifted = CorruptedSet(
        z=cs.z + shift,
        mask_wstar=cs.mask_wstar,
        epsilon=cs.epsilon,
        origin=shifted_origin,
    )
    rep2 = sos_mean(shifted, sigma=1.2, k=2, r=2, tol=1e-6, max_iter=40_000)
    assert np.allclose(rep2.mu_hat - shift, rep.mu_hat, atol=1e-5)


def test_baseline_translation_equivariance():
    data = rng(12).standard_normal((15, 2)) * 2.0
    cs = as_corrupted(data)
    shift = np.array([5.0, -3.0])
    cs_shifted = as_corrupted(data + shift)
    for est in (sample_mean, coordinate_median, geometric_median):
        a = est(cs).mu_hat
        b = est(cs_shifted).mu_hat
        assert np.allclose(b - shift, a, atol=1e-7)


def test_sos_mean_infeasible_raises():
    # sigma far too small: even the clean witness violates the budget
    s = sample(GaussianIdentity(mean=(0.0,)), 12, seed=13)
    cs = corrupt(s, 0.0, Identity(), seed=14)
    with pytest.raises(EstimationError):
        sos_mean(
            cs,
            sigma=0.05,
            k=2,
            r=2,
            tol=1e-7,
            max_iter=20_000,
            sigma_slack=1.0,
        )


def test_lower_coordinate_median_even_n():
    z = np.array([[1.0], [4.0], [2.0], [3.0]])
    assert lower_coordinate_median(z)[0] == 2.0
