"""Heat-rod test plant checks: conservation, relaxation to the mean, and
agreement with the eigen-decomposition solution of the implicit update."""

import numpy as np
import pytest

from drsmpc.plant import HeatRodParams, initial_rod_state, rod_energy, step_heat_rod


def test_uniform_zero_flux_fixed_point():
    p = HeatRodParams(n_nodes=20)
    u = initial_rod_state(p, temperature=3.5)
    stepped = step_heat_rod(u, 0.0, 1.0, p)
    np.testing.assert_allclose(stepped, u, rtol=1e-13)


def test_energy_bookkeeping_under_flux():
    p = HeatRodParams(n_nodes=37)
    rng = np.random.default_rng(0)
    u = rng.normal(size=p.n_nodes)
    e = rod_energy(u, p)
    flux, dt = 0.8, 0.5
    for _ in range(25):
        u = step_heat_rod(u, flux, dt, p)
        e += flux * dt
        assert rod_energy(u, p) == pytest.approx(e, rel=1e-12)


def test_relaxation_to_uniform_mean():
    p = HeatRodParams(n_nodes=30, diffusivity=5e-3)
    rng = np.random.default_rng(1)
    u = rng.normal(size=p.n_nodes)
    mean = u.mean()
    for _ in range(4000):
        u = step_heat_rod(u, 0.0, 1.0, p)
    np.testing.assert_allclose(u, np.full(p.n_nodes, mean), atol=1e-8)


def test_matches_eigen_decomposition_oracle():
    # implicit step is u' = (I - dt A)^{-1} u; many steps via eigh of A
    p = HeatRodParams(n_nodes=24, diffusivity=2e-3)
    dt, steps = 0.7, 50
    r = p.diffusivity / p.dx**2
    a = np.zeros((p.n_nodes, p.n_nodes))
    for i in range(p.n_nodes):
        if i > 0:
            a[i, i - 1] = r
            a[i, i] -= r
        if i < p.n_nodes - 1:
            a[i, i + 1] = r
            a[i, i] -= r
    vals, vecs = np.linalg.eigh(a)
    rng = np.random.default_rng(2)
    u0 = rng.normal(size=p.n_nodes)
    expected = vecs @ ((1.0 / (1.0 - dt * vals)) ** steps * (vecs.T @ u0))
    u = u0.copy()
    for _ in range(steps):
        u = step_heat_rod(u, 0.0, dt, p)
    np.testing.assert_allclose(u, expected, atol=1e-10)


def test_input_validation():
    p = HeatRodParams(n_nodes=10)
    with pytest.raises(ValueError):
        step_heat_rod(np.zeros(9), 0.0, 1.0, p)
    with pytest.raises(ValueError):
        step_heat_rod(np.zeros(10), 0.0, -1.0, p)
    with pytest.raises(ValueError):
        HeatRodParams(n_nodes=1)
