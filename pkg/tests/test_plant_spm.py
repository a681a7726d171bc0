"""Battery plant checks.

Covers the step/observe contract: equilibrium fixed point, thermal
relaxation, a fine-timestep SOC self-oracle, a bisection oracle for the
Butler-Volmer inversion, lithium conservation, charge bookkeeping, SOC
monotonicity, and the out-of-range / non-finite error paths.
"""

import numpy as np
import pytest

from drsmpc.errors import ConcentrationOutOfRange, ConfigError, NonFiniteOutput
from drsmpc.plant import (
    default_params,
    initial_state,
    molar_fluxes,
    observe,
    step_spm,
    total_moles,
)
from drsmpc.plant.params import OcpTable, arrhenius


@pytest.fixture(scope="module")
def params():
    return default_params(t_amb=281.0)


def test_equilibrium_fixed_point(params):
    state = initial_state(0.3, params)
    stepped = step_spm(state, 0.0, 15.0, params)
    np.testing.assert_allclose(stepped.c_neg, state.c_neg, rtol=1e-12)
    np.testing.assert_allclose(stepped.c_pos, state.c_pos, rtol=1e-12)
    assert abs(stepped.temperature - params.t_amb) < 1e-12


def test_thermal_relaxation_monotone(params):
    state = initial_state(0.3, params)
    state.temperature = params.t_amb + 10.0
    c_neg0 = state.c_neg.copy()
    gaps = []
    for _ in range(40):
        state = step_spm(state, 0.0, 15.0, params)
        gaps.append(abs(state.temperature - params.t_amb))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # zero current leaves concentrations alone regardless of temperature
    np.testing.assert_allclose(state.c_neg, c_neg0, rtol=1e-12)


def test_soc_rise_against_fine_timestep_oracle(params):
    # constant 1C for 360 s; reference integration uses dt/100 substeps
    coarse = initial_state(0.1, params)
    fine = initial_state(0.1, params)
    for _ in range(24):
        coarse = step_spm(coarse, 1.0, 15.0, params)
    for _ in range(2400):
        fine = step_spm(fine, 1.0, 0.15, params)
    rise_coarse = observe(coarse, 0.0, params).soc - 0.1
    rise_fine = observe(fine, 0.0, params).soc - 0.1
    assert abs(rise_coarse - rise_fine) / rise_fine < 1e-3


def test_open_circuit_observation(params):
    state = initial_state(0.5, params)
    out = observe(state, 0.0, params)
    assert out.eta_minus == 0.0 and out.eta_plus == 0.0
    theta_ss = state.c_neg[-1] / params.neg.c_s_max
    u_neg = params.neg.ocp(theta_ss)
    assert abs(out.eta_s - (u_neg - params.u_side_reaction)) < 1e-12
    u_pos = params.pos.ocp(state.c_pos[-1] / params.pos.c_s_max)
    assert abs(out.voltage - (u_pos - u_neg)) < 1e-12
    assert out.voltage == pytest.approx(out.ocv)


def test_overpotential_hand_value(params):
    # pick k so that i0 = F j_n / (2 sinh(1)); then eta must be 2RT/F
    state = initial_state(0.4, params)
    current = -1.0  # discharge makes j_n^- positive
    j_neg, _ = molar_fluxes(params.current_density(current), params)
    c_ss = state.c_neg[-1]
    i0_target = params.faraday * j_neg / (2.0 * np.sinh(1.0))
    k = i0_target / np.sqrt(params.c_e * c_ss * (params.neg.c_s_max - c_ss))
    from dataclasses import replace

    p = params.with_overrides(neg=replace(params.neg, k_ref=k), t_amb=params.t_ref)
    state = initial_state(0.4, p)
    out = observe(state, current, p)
    expected = 2.0 * p.gas_constant * p.t_ref / p.faraday
    assert out.eta_minus == pytest.approx(expected, rel=1e-12)


def test_butler_volmer_bisection_oracle(params):
    # observe's analytic eta must agree with a root solve of
    # j_n = (2 i0 / F) sinh(F eta / (2 R T)) to better than 1e-9 V
    rng = np.random.default_rng(7)
    for _ in range(10):
        soc = rng.uniform(0.05, 0.9)
        state = initial_state(soc, params)
        state.temperature = rng.uniform(275.0, 310.0)
        out = observe(state, 2.0, params)
        t = state.temperature
        f, r = params.faraday, params.gas_constant

        def residual(eta, j_n, i0):
            return 2.0 * i0 / f * np.sinh(f * eta / (2.0 * r * t)) - j_n

        for eta, j_n, i0 in (
            (out.eta_minus, out.j_n_minus, out.i0_minus),
            (out.eta_plus, out.j_n_plus, out.i0_plus),
        ):
            lo, hi = -2.0, 2.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if residual(mid, j_n, i0) < 0.0:
                    lo = mid
                else:
                    hi = mid
            assert abs(eta - 0.5 * (lo + hi)) < 1e-9
            # substituting back must vanish
            assert abs(residual(eta, j_n, i0)) / abs(j_n) < 1e-9


def test_lithium_conservation_zero_current(params):
    state = initial_state(0.37, params)
    # start from a non-uniform profile so diffusion actually acts
    for _ in range(8):
        state = step_spm(state, 2.0, 15.0, params)
    m_neg = total_moles(state.c_neg, params.neg, params.n_radial)
    m_pos = total_moles(state.c_pos, params.pos, params.n_radial)
    for _ in range(200):
        state = step_spm(state, 0.0, 15.0, params)
        assert abs(total_moles(state.c_neg, params.neg, params.n_radial) - m_neg) / m_neg < 1e-10
        assert abs(total_moles(state.c_pos, params.pos, params.n_radial) - m_pos) / m_pos < 1e-10


def test_charge_bookkeeping(params):
    # change in electrode lithium equals a L A |j_n| dt summed over steps
    state = initial_state(0.2, params)
    scale = params.neg.area_density * params.neg.thickness * params.cell_area / (
        4.0 * np.pi * params.neg.r_s**2
    )  # particles per electrode
    n0 = scale * total_moles(state.c_neg, params.neg, params.n_radial)
    current, dt, steps = 1.5, 15.0, 40
    j_neg, _ = molar_fluxes(params.current_density(current), params)
    for _ in range(steps):
        state = step_spm(state, current, dt, params)
    n1 = scale * total_moles(state.c_neg, params.neg, params.n_radial)
    expected = -params.neg.area_density * params.neg.thickness * params.cell_area * j_neg * dt * steps
    assert abs((n1 - n0) - expected) / expected < 1e-6


def test_soc_monotone_under_charge(params):
    rng = np.random.default_rng(3)
    state = initial_state(0.05, params)
    soc = observe(state, 0.0, params).soc
    for _ in range(60):
        current = rng.uniform(0.0, 2.5)
        state = step_spm(state, current, 15.0, params)
        nxt = observe(state, 0.0, params).soc
        assert nxt >= soc - 1e-14
        soc = nxt


def test_concentration_out_of_range(params):
    state = initial_state(0.02, params)
    with pytest.raises((ConcentrationOutOfRange, NonFiniteOutput)):
        for _ in range(200):
            state = step_spm(state, -30.0, 15.0, params)  # deep discharge drains the surface


def test_arrhenius_direction(params):
    cold = arrhenius(1.0, 30000.0, params.t_ref - 20.0, params)
    hot = arrhenius(1.0, 30000.0, params.t_ref + 20.0, params)
    assert cold < 1.0 < hot
    assert arrhenius(2.5, 30000.0, params.t_ref, params) == pytest.approx(2.5)


def test_capacity_definition_consistency(params):
    # 1C for one hour must traverse the whole stoichiometry window
    rate = observe(initial_state(0.0, params), 0.0, params)
    assert rate.soc == pytest.approx(0.0, abs=1e-12)
    state = initial_state(0.0, params)
    for _ in range(240):
        state = step_spm(state, 1.0, 15.0, params)
    # shell-midpoint quadrature biases the particle volume by 1/(4 N_r^2)
    assert observe(state, 0.0, params).soc == pytest.approx(1.0, rel=5e-4)


def test_ocp_table_validation():
    with pytest.raises(ConfigError):
        OcpTable([0.1, 0.2, 0.3], [1.0, 1.1, 0.9])  # not decreasing
    with pytest.raises(ConfigError):
        OcpTable([0.1, 0.1, 0.3], [1.0, 0.9, 0.8])  # breakpoints not increasing
    table = OcpTable([0.0, 0.5, 1.0], [1.0, 0.4, 0.1])
    assert table(0.25) == pytest.approx(0.7)
