import dataclasses

import numpy as np
import pytest

from sosmean.adversary import ClusterAtScaledSpike, ReplaceWithPoint, corrupt
from sosmean.distributions import GaussianIdentity, rng, sample
from sosmean.monomials import Poly
from sosmean import relax, sdp


def pinned_scalar_relaxation(rhs=1.0):
    """Moment matrix [y], equality y = rhs: the 1x1 conic toy."""
    sysb = relax.bare_boolean_system(0, 0)
    rel = relax.compile_relaxation(sysb, 1)
    return dataclasses.replace(rel, eq_rhs=(rhs,))


def test_pinned_scalar_solves_to_one():
    rel = pinned_scalar_relaxation(1.0)
    out = sdp.solve(rel, objective=np.array([1.0]), tol=1e-9, max_iter=5000)
    assert out.solved
    assert out.y[0] == pytest.approx(1.0, abs=1e-7)


def test_pinned_scalar_negative_is_infeasible():
    rel = pinned_scalar_relaxation(-1.0)
    out = sdp.solve(rel, tol=1e-9, max_iter=20_000)
    assert out.status == sdp.INFEASIBLE
    assert out.pe is None


def test_boolean_moment_interval():
    # moment matrix [[1, y],[y, y]] is PSD iff y in [0, 1]
    rel = relax.compile_relaxation(relax.bare_boolean_system(1, 0), 1)
    w = Poly.w(0, 0)
    lo = sdp.solve(rel, objective=w, tol=1e-9, max_iter=20_000)
    hi = sdp.solve(rel, objective=-1.0 * w, tol=1e-9, max_iter=20_000)
    assert lo.solved and hi.solved
    assert lo.pe.evaluate(w) == pytest.approx(0.0, abs=1e-6)
    assert hi.pe.evaluate(w) == pytest.approx(1.0, abs=1e-6)


def solved_instance(eps=0.3, n=10, seed=21, tol=1e-6, strategy=None):
    s = sample(GaussianIdentity(mean=(0.0,)), n, seed=seed)
    strategy = strategy or ClusterAtScaledSpike(k=2)
    cs = corrupt(s, eps, strategy, seed=seed + 1)
    sys2 = relax.build_system(cs, sigma=1.3, k=2)
    rel = relax.compile_relaxation(sys2, 2)
    frac = min(sys2.mass_rhs / n, 1.0)
    y0 = relax.product_moment_vector(rel, np.full(n, frac), cs.z.mean(axis=0))
    out = sdp.solve(rel, tol=tol, max_iter=60_000, y0=y0)
    return rel, out


def test_solved_pe_invariants():
    rel, out = solved_instance()
    assert out.solved
    pe = out.pe
    assert pe.evaluate(Poly.constant(1.0, 1)) == pytest.approx(1.0, abs=1e-8)
    assert pe.residuals.equality_max <= 1e-6
    assert pe.residuals.min_eig_ok(1e-6)
    assert pe.is_valid()


def test_pe_evaluate_linear_and_zero_poly():
    rel, out = solved_instance()
    pe = out.pe
    d = 1
    zero = (Poly.w(0, d) - Poly.w(0, d)) * Poly.mu(0, d)
    assert pe.evaluate(zero) == 0.0
    p = Poly.mu(0, d) * 2.0 + 1.0
    assert pe.evaluate(p) == pytest.approx(2.0 * pe.evaluate(Poly.mu(0, d)) + 1.0)


def test_pe_rejects_out_of_basis():
    rel, out = solved_instance()
    pe = out.pe
    mu = Poly.mu(0, 1)
    too_big = mu * mu * mu * mu * mu  # degree 5 > 2r = 4
    with pytest.raises(sdp.OutOfBasisError):
        pe.evaluate(too_big)


def test_nonnegativity_of_squares_random_polys():
    rel, out = solved_instance()
    pe = out.pe
    g = rng(99)
    mat = pe.moment_matrix()
    tr = np.trace(mat)
    basis_monos = rel.basis.monomials
    for _ in range(1000):
        coeffs = g.standard_normal(len(basis_monos))
        val = coeffs @ mat @ coeffs
        scale = float(coeffs @ coeffs) * (1.0 + tr)
        assert val >= -1e-6 * scale


def test_constraint_satisfaction_in_expectation():
    # E~[g q^2] >= -tol for the mass constraint against random low-degree q
    rel, out = solved_instance()
    pe = out.pe
    sys2 = rel.system
    d = sys2.d
    mass_poly = sum(
        (Poly.w(i, d) for i in range(sys2.n)), Poly.constant(0.0, d)
    ) - sys2.mass_rhs
    g = rng(7)
    lin_basis = [Poly.constant(1.0, d)] + [Poly.w(i, d) for i in range(sys2.n)] + [
        Poly.mu(0, d)
    ]
    for _ in range(200):
        coeffs = g.standard_normal(len(lin_basis))
        q = Poly.constant(0.0, d)
        for c, b in zip(coeffs, lin_basis):
            q = q + float(c) * b
        val = pe.evaluate(mass_poly * q * q)
        scale = float(np.dot(coeffs, coeffs)) * (1.0 + sys2.mass_rhs)
        assert val >= -1e-5 * scale


def test_monotone_residual_checkpoints():
    rel, out = solved_instance(eps=0.4, seed=33, tol=1e-7)
    disp = [c[1] for c in out.checkpoints]
    assert len(disp) >= 3
    for a, b in zip(disp, disp[1:]):
        assert b <= a * (1.0 + 1e-9)


def test_not_converged_carries_partial_iterate():
    s = sample(GaussianIdentity(mean=(0.0,)), 10, seed=41)
    cs = corrupt(s, 0.3, ClusterAtScaledSpike(k=2), seed=42)
    rel = relax.compile_relaxation(relax.build_system(cs, sigma=1.2, k=2), 2)
    out = sdp.solve(rel, tol=1e-12, max_iter=40)
    assert out.status == sdp.NOT_CONVERGED
    assert out.pe is not None
    assert out.y is not None


def test_tolerance_must_be_positive():
    rel = pinned_scalar_relaxation(1.0)
    with pytest.raises(ValueError):
        sdp.solve(rel, tol=0.0)


def test_solver_deterministic():
    rel1, out1 = solved_instance(seed=55, tol=1e-5)
    rel2, out2 = solved_instance(seed=55, tol=1e-5)
    assert out1.iterations == out2.iterations
    assert np.array_equal(out1.y, out2.y)


def test_trace_file_written(tmp_path):
    rel = pinned_scalar_relaxation(1.0)
    trace = tmp_path / "trace.csv"
    sdp.solve(rel, tol=1e-9, max_iter=2000, trace_path=str(trace))
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,primal_residual,relative_residual,displacement"
    assert len(lines) >= 2
