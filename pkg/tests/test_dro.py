"""Tests for the distributionally robust offset pipeline.

Covers: whitening (matrix square root, population covariance, exact
two-sample example, singular covariance), ambiguity radii (closed-form
diameter value, 1/sqrt(ell) scaling, concentration constant against a
dense alpha-grid oracle, degenerate all-identical samples), the dual
objective (hand values, exact lambda minimization against a million
point grid), sigma bisection (closed form for identical norms, upper
bound semantics, monotonicity in eta and epsilon, infeasibility,
independent two-stage grid oracle), the in-sample guarantee, and
certificate construction (vertex map roundtrip, scalar offset,
determinism, save/load, diameter fallback).
"""

import numpy as np
import pytest

from drsmpc import dro
from drsmpc.errors import InfeasibleAtSigmaMax, SingularCovariance


def from_theta(theta):
    """Wrap already-whitened samples so duals can be probed directly."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta.reshape(-1, 1)
    m = theta.shape[1]
    norms = np.max(np.abs(theta), axis=1)
    return dro.NormalizedSamples(
        theta=theta,
        inf_norms=norms,
        sigma_max=3.0 * float(norms.max()),
        cov_root=np.eye(m),
        cov_root_inv=np.eye(m),
        mean=np.zeros(m),
    )


def lambda_grid_min(sigma, epsilon, normalized, n=1_000_000):
    """Dense grid minimization of the dual, chunked over samples."""
    gaps = np.maximum(sigma - normalized.inf_norms, 0.0)
    positive = gaps[gaps > 0.0]
    hi = 2.0 / positive.min() if positive.size else 1.0
    lams = np.linspace(0.0, hi, n)
    total = np.zeros(n)
    for g in gaps:
        total += np.maximum(1.0 - lams * g, 0.0)
    h = lams * epsilon + total / gaps.size
    k = int(np.argmin(h))
    return float(lams[k]), float(h[k])


def grid_sigma_oracle(normalized, epsilon, eta, n_coarse=1000, n_fine=1000):
    """Two-stage dense grid search over sigma, exact kink scan in lambda."""

    def min_h(sigma):
        gaps = np.maximum(sigma - normalized.inf_norms, 0.0)
        lams = np.concatenate(([0.0], 1.0 / gaps[gaps > 0.0]))
        terms = np.maximum(1.0 - np.outer(lams, gaps), 0.0).mean(axis=1)
        return float((lams * epsilon + terms).min())

    grid = np.linspace(0.0, normalized.sigma_max, n_coarse)
    feasible = np.array([min_h(s) <= eta for s in grid])
    assert feasible.any(), "oracle found no feasible sigma"
    k = int(np.argmax(feasible))
    lo = grid[k - 1] if k > 0 else 0.0
    fine = np.linspace(lo, grid[k], n_fine)
    fine_feasible = np.array([min_h(s) <= eta for s in fine])
    return float(fine[np.argmax(fine_feasible)])


def random_residuals(rng, ell=50, m=1, scale=0.02):
    data = scale * rng.standard_normal((ell, m))
    data[rng.integers(0, ell)] *= 3.0  # a heavy-tailed straggler
    return dro.ResidualSamples.from_data(data)


def test_population_covariance_two_samples():
    # mean 0, covariance ((-1)^2 + 1^2)/2 = 1, so whitening is identity
    res = dro.ResidualSamples.from_data(np.array([[-1.0], [1.0]]))
    assert res.mean[0] == 0.0
    assert res.cov[0, 0] == 1.0
    normalized = dro.normalize(res, ridge=0.0)
    np.testing.assert_allclose(np.sort(normalized.theta[:, 0]), [-1.0, 1.0])
    assert normalized.sigma_max == pytest.approx(3.0)


def test_whitening_matrix_root():
    rng = np.random.default_rng(7)
    base = rng.standard_normal((3, 3))
    data = rng.standard_normal((500, 3)) @ base.T + np.array([0.3, -1.0, 2.0])
    res = dro.ResidualSamples.from_data(data)
    normalized = dro.normalize(res)
    ridged = res.cov + dro.default_ridge(res) * np.eye(3)
    np.testing.assert_allclose(normalized.cov_root @ normalized.cov_root, ridged, atol=1e-8)
    np.testing.assert_allclose(
        normalized.cov_root_inv @ normalized.cov_root, np.eye(3), atol=1e-8
    )
    np.testing.assert_allclose(normalized.theta.mean(axis=0), np.zeros(3), atol=1e-8)
    sample_cov = normalized.theta.T @ normalized.theta / 500
    np.testing.assert_allclose(sample_cov, np.eye(3), atol=1e-6)


def test_singular_covariance_raises_without_ridge():
    data = np.column_stack([np.linspace(-1, 1, 20), np.full(20, 0.5)])
    res = dro.ResidualSamples.from_data(data)
    with pytest.raises(SingularCovariance):
        dro.normalize(res, ridge=0.0)
    dro.normalize(res)  # default ridge restores positive definiteness


def test_radius_diameter_closed_form():
    # sqrt((2/200) ln(1/0.1)) = sqrt(0.01 ln 10)
    eps = dro.radius_diameter(1.0, 200, 0.9)
    assert eps == pytest.approx(0.15174271293851465, rel=1e-12)
    assert dro.radius_diameter(1.0, 400, 0.9) == pytest.approx(eps / np.sqrt(2.0), rel=1e-12)
    assert dro.radius_diameter(1.0, 200, 1e-9) < 1e-4
    with pytest.raises(ValueError):
        dro.radius_diameter(0.0, 200, 0.9)
    with pytest.raises(ValueError):
        dro.radius_diameter(1.0, 200, 1.0)


def alpha_grid_constant(normalized, n=1_000_000):
    centered = normalized.theta - normalized.theta.mean(axis=0)
    sq = np.sum(np.abs(centered), axis=1) ** 2
    peak = float(sq.max())
    alpha_hi = min(1e12, 700.0 / peak) if peak > 0.0 else 1e12
    alphas = np.exp(np.linspace(np.log(1e-6), np.log(alpha_hi), n))
    best = np.inf
    for chunk in np.array_split(alphas, 100):
        vals = (1.0 + np.log(np.mean(np.exp(np.outer(chunk, sq)), axis=1))) / (2.0 * chunk)
        best = min(best, float(vals.min()))
    return 2.0 * np.sqrt(best)


def test_concentration_constant_matches_alpha_grid_two_samples():
    normalized = from_theta(np.array([-1.0, 1.0]))
    c = dro.concentration_constant(normalized)
    assert c == pytest.approx(alpha_grid_constant(normalized), abs=1e-4)


def test_concentration_constant_matches_alpha_grid_random():
    rng = np.random.default_rng(21)
    res = dro.ResidualSamples.from_data(rng.standard_normal((100, 2)))
    normalized = dro.normalize(res)
    c = dro.concentration_constant(normalized)
    assert c == pytest.approx(alpha_grid_constant(normalized), rel=1e-4)
    c2, eps = dro.radius_concentration(normalized, 100, 0.9)
    assert c2 == c
    assert eps == pytest.approx(c * np.sqrt(2.0 / 100 * np.log(10.0)), rel=1e-12)


def test_concentration_degenerate_identical_samples():
    # all whitened samples equal: exponent is 0, constant shrinks to ~0
    normalized = from_theta(np.full(10, 0.7))
    c = dro.concentration_constant(normalized)
    assert 0.0 < c < 1e-5


def test_worst_case_h_hand_values():
    normalized = from_theta(np.array([1.0, 3.0]))
    assert dro.worst_case_h(2.0, 0.0, 0.5, normalized) == pytest.approx(1.0)
    # lam * eps = 0.5, hinge terms (1 - 1*1)+ = 0 and (1 - 0)+ = 1
    assert dro.worst_case_h(2.0, 1.0, 0.5, normalized) == pytest.approx(1.0)
    assert dro.worst_case_h(2.0, 1.0, 0.0, normalized) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        dro.worst_case_h(2.0, -1.0, 0.5, normalized)


def test_minimize_lambda_matches_dense_grid():
    rng = np.random.default_rng(3)
    normalized = from_theta(rng.uniform(0.1, 2.0, size=40))
    for sigma, epsilon in [(1.0, 0.05), (1.7, 0.2), (2.5, 0.0)]:
        lam_star, h_star = dro.minimize_h_over_lambda(sigma, epsilon, normalized)
        _, h_grid = lambda_grid_min(sigma, epsilon, normalized)
        assert h_star <= h_grid + 1e-12  # kink scan is exact, grid is not
        assert h_star == pytest.approx(h_grid, abs=1e-6)


def test_minimize_lambda_huge_epsilon_picks_zero():
    normalized = from_theta(np.array([0.5, 1.0, 1.5]))
    lam_star, h_star = dro.minimize_h_over_lambda(2.0, 1e6, normalized)
    assert lam_star == 0.0
    assert h_star == pytest.approx(1.0)


def test_minimize_lambda_all_samples_outside():
    # sigma below every norm: no kinks, dual is flat at 1 plus lam*eps
    normalized = from_theta(np.array([1.0, 2.0]))
    lam_star, h_star = dro.minimize_h_over_lambda(0.5, 0.3, normalized)
    assert (lam_star, h_star) == (0.0, pytest.approx(1.0))


def test_sigma_closed_form_identical_norms():
    # all norms c: min_lambda h = eps/(sigma - c), so sigma* = c + eps/eta
    c, epsilon, eta = 1.0, 0.05, 0.1
    normalized = from_theta(np.tile([c, -c], 20))
    sigma, lam_star = dro.compute_sigma(normalized, epsilon, eta, tol=1e-6)
    assert abs(sigma - (c + epsilon / eta)) < 2e-6
    assert lam_star == pytest.approx(1.0 / (sigma - c), rel=1e-9)


def test_sigma_zero_radius_touches_largest_norm():
    normalized = from_theta(np.array([1.0, 1.0, 1.0, 1.0]))
    sigma, _ = dro.compute_sigma(normalized, 0.0, 0.1, tol=1e-6)
    assert 1.0 < sigma <= 1.0 + 2e-6


def test_sigma_is_an_upper_bound():
    rng = np.random.default_rng(11)
    normalized = dro.normalize(random_residuals(rng, ell=60))
    tol = 1e-6
    sigma, _ = dro.compute_sigma(normalized, 0.03, 0.1, tol=tol)
    _, h_at = dro.minimize_h_over_lambda(sigma, 0.03, normalized)
    assert h_at <= 0.1
    _, h_below = dro.minimize_h_over_lambda(sigma - tol, 0.03, normalized)
    assert h_below > 0.1


def test_sigma_monotone_in_eta_and_epsilon():
    rng = np.random.default_rng(5)
    normalized = dro.normalize(random_residuals(rng, ell=80))
    sigmas_eta = [
        dro.compute_sigma(normalized, 0.02, eta)[0] for eta in (0.05, 0.1, 0.2, 0.4)
    ]
    assert all(a >= b - 1e-9 for a, b in zip(sigmas_eta, sigmas_eta[1:]))
    sigmas_eps = [
        dro.compute_sigma(normalized, eps, 0.1)[0] for eps in (0.0, 0.02, 0.05, 0.1)
    ]
    assert all(a <= b + 1e-9 for a, b in zip(sigmas_eps, sigmas_eps[1:]))


def test_sigma_infeasible_at_sigma_max():
    normalized = from_theta(np.array([-1.0, 1.0, -1.0, 1.0]))
    with pytest.raises(InfeasibleAtSigmaMax):
        dro.compute_sigma(normalized, 1.0, 0.1)


def test_sigma_matches_independent_grid_oracle():
    rng = np.random.default_rng(42)
    for _ in range(3):
        normalized = dro.normalize(random_residuals(rng, ell=50))
        epsilon = 0.3 * float(np.median(normalized.inf_norms))
        sigma, _ = dro.compute_sigma(normalized, epsilon, 0.1)
        oracle = grid_sigma_oracle(normalized, epsilon, 0.1)
        assert sigma == pytest.approx(oracle, abs=1e-3)


def test_in_sample_guarantee():
    rng = np.random.default_rng(17)
    res = random_residuals(rng, ell=200)
    cert = dro.build_certificate(res, beta=0.9, eta=0.1)
    normalized = dro.normalize(res)
    fraction_outside = float(np.mean(normalized.inf_norms > cert.sigma))
    assert fraction_outside <= 0.1


def test_row_permutation_invariance():
    rng = np.random.default_rng(29)
    data = 0.05 * rng.standard_normal((300, 1))
    cert_a = dro.build_certificate(data, beta=0.9, eta=0.1)
    cert_b = dro.build_certificate(data[rng.permutation(300)], beta=0.9, eta=0.1)
    assert cert_a.epsilon == pytest.approx(cert_b.epsilon, rel=1e-9)
    assert cert_a.sigma == pytest.approx(cert_b.sigma, rel=1e-6)
    assert cert_a.offset == pytest.approx(cert_b.offset, rel=1e-6)


def test_certificate_vertex_roundtrip():
    rng = np.random.default_rng(31)
    res = dro.ResidualSamples.from_data(0.1 * rng.standard_normal((600, 2)) + 0.02)
    cert = dro.build_certificate(res, beta=0.9, eta=0.1)
    assert cert.vertices.shape == (4, 2)
    assert cert.offset is None
    normalized = dro.normalize(res)
    corners = (cert.vertices - normalized.mean) @ normalized.cov_root_inv.T
    np.testing.assert_allclose(np.abs(corners), cert.sigma, atol=1e-8)


def test_certificate_scalar_offset():
    rng = np.random.default_rng(37)
    res = random_residuals(rng, ell=400)
    cert = dro.build_certificate(res, beta=0.9, eta=0.1, provenance={"source": "unit"})
    normalized = dro.normalize(res)
    expected = float(normalized.cov_root[0, 0] * cert.sigma + normalized.mean[0])
    assert cert.offset == pytest.approx(expected, rel=1e-12)
    assert cert.offset > 0.0  # robustness must shrink the feasible set
    assert cert.provenance == {"ell": 400, "m": 1, "source": "unit"}


def test_certificate_deterministic_and_roundtrips(tmp_path):
    rng = np.random.default_rng(41)
    data = 0.03 * rng.standard_normal((320, 1))
    cert_a = dro.build_certificate(data, beta=0.9, eta=0.1)
    cert_b = dro.build_certificate(data.copy(), beta=0.9, eta=0.1)
    path_a, path_b = tmp_path / "a.json", tmp_path / "b.json"
    cert_a.save(path_a)
    cert_b.save(path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    loaded = dro.AmbiguityCertificate.load(path_a)
    assert loaded.sigma == cert_a.sigma
    assert loaded.offset == cert_a.offset
    np.testing.assert_array_equal(loaded.vertices, cert_a.vertices)
    assert loaded.provenance == cert_a.provenance


def test_certificate_diameter_method():
    rng = np.random.default_rng(43)
    res = random_residuals(rng, ell=1000)
    cert = dro.build_certificate(res, beta=0.9, eta=0.1, method="diameter")
    assert cert.radius_method == "diameter"
    normalized = dro.normalize(res)
    centered = normalized.theta - normalized.theta.mean(axis=0)
    d_default = 2.0 * float(np.sum(np.abs(centered), axis=1).max())
    assert cert.radius_constant == pytest.approx(d_default, rel=1e-12)
    assert cert.epsilon == pytest.approx(
        dro.radius_diameter(d_default, 1000, 0.9), rel=1e-12
    )
    with pytest.raises(ValueError):
        dro.build_certificate(res, beta=0.9, eta=0.1, method="mystery")
