"""Single-particle battery plant: two diffusing particles plus a lumped
thermal state.

One representative spherical particle per electrode carries the solid
lithium concentration on a uniform radial grid; Butler-Volmer kinetics,
the side-reaction overpotential, and the terminal voltage are algebraic
outputs. Positive current charges the cell (lithium into the negative
particle).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ..errors import ConcentrationOutOfRange, NonFiniteOutput, NonFiniteState
from .params import ElectrodeParams, PlantParams, arrhenius

# relative slack on [0, c_s_max] before a shell concentration counts as
# out of range (backward Euler keeps overshoot at roundoff level)
_CONC_RTOL = 1e-9


@dataclass
class PlantState:
    """Full plant state: shell concentrations per electrode + temperature."""

    c_neg: np.ndarray  # (n_radial,) mol/m^3
    c_pos: np.ndarray  # (n_radial,) mol/m^3
    temperature: float  # K

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.c_neg, self.c_pos, [self.temperature]])

    @classmethod
    def from_flat(cls, x: np.ndarray, n_radial: int) -> "PlantState":
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n_radial + 1,):
            raise ValueError(f"expected flat state of length {2 * n_radial + 1}")
        return cls(
            c_neg=x[:n_radial].copy(),
            c_pos=x[n_radial : 2 * n_radial].copy(),
            temperature=float(x[-1]),
        )

    def copy(self) -> "PlantState":
        return PlantState(self.c_neg.copy(), self.c_pos.copy(), float(self.temperature))


@dataclass(frozen=True)
class PlantOutputs:
    """Algebraic plant outputs at a given state and applied current."""

    soc: float
    voltage: float
    eta_s: float
    eta_minus: float
    eta_plus: float
    temperature: float
    i0_minus: float
    i0_plus: float
    j_n_minus: float
    j_n_plus: float
    c_ss_minus: float
    c_ss_plus: float
    ocv: float


def initial_state(soc: float, params: PlantParams) -> PlantState:
    """Uniform-concentration state at the given SOC, at ambient temperature."""
    if not 0.0 <= soc <= 1.0:
        raise ValueError("soc must be in [0, 1]")
    theta_neg = params.theta_neg_0 + soc * (params.theta_neg_100 - params.theta_neg_0)
    theta_pos = params.theta_pos_0 - soc * (params.theta_pos_0 - params.theta_pos_100)
    n = params.n_radial
    return PlantState(
        c_neg=np.full(n, theta_neg * params.neg.c_s_max),
        c_pos=np.full(n, theta_pos * params.pos.c_s_max),
        temperature=params.t_amb,
    )


def _shell_weights(r_s: float, n: int) -> np.ndarray:
    """Quadrature weights r_i^2 dr over shell midpoints (4 pi dropped)."""
    dr = r_s / n
    centers = (np.arange(n) + 0.5) * dr
    return centers**2 * dr


def total_moles(conc: np.ndarray, electrode: ElectrodeParams, n_radial: int) -> float:
    """Particle lithium content, sum of 4 pi r^2 dr c over shells."""
    return float(4.0 * np.pi * _shell_weights(electrode.r_s, n_radial) @ conc)


def molar_fluxes(current_density: float, params: PlantParams) -> tuple[float, float]:
    """Surface molar fluxes (j_n^-, j_n^+), deintercalation positive.

    Positive applied current charges the cell, so the negative particle
    takes lithium in (j_n^- < 0) and the positive one releases it.
    """
    f = params.faraday
    j_neg = -current_density / (params.neg.area_density * f * params.neg.thickness)
    j_pos = +current_density / (params.pos.area_density * f * params.pos.thickness)
    return j_neg, j_pos


def mean_stoichiometry(conc: np.ndarray, electrode: ElectrodeParams, n_radial: int) -> float:
    w = _shell_weights(electrode.r_s, n_radial)
    return float((w @ conc) / (w.sum() * electrode.c_s_max))


def _exchange_current(k: float, c_ss: float, electrode: ElectrodeParams, c_e: float) -> float:
    arg = c_e * c_ss * (electrode.c_s_max - c_ss)
    if arg <= 0.0:
        return 0.0
    return k * np.sqrt(arg)


def observe(state: PlantState, current: float, params: PlantParams) -> PlantOutputs:
    """Algebraic outputs for the given state and applied C-rate.

    Overpotentials come from the analytic Butler-Volmer inverse
    eta = (2RT/F) asinh(F j_n / (2 i0)) with symmetric transfer
    coefficients; the side-reaction overpotential is
    eta_s = eta^- + U^-(theta_ss^-) + F R_f^- j_n^- - U_sr.
    """
    i_dens = params.current_density(current)
    j_neg, j_pos = molar_fluxes(i_dens, params)
    t = state.temperature
    f, r_gas = params.faraday, params.gas_constant

    c_ss_neg = float(state.c_neg[-1])
    c_ss_pos = float(state.c_pos[-1])
    k_neg = arrhenius(params.neg.k_ref, params.neg.e_act_k, t, params)
    k_pos = arrhenius(params.pos.k_ref, params.pos.e_act_k, t, params)
    i0_neg = _exchange_current(k_neg, c_ss_neg, params.neg, params.c_e)
    i0_pos = _exchange_current(k_pos, c_ss_pos, params.pos, params.c_e)

    def overpotential(j_n: float, i0: float, side: str) -> float:
        if j_n == 0.0:
            return 0.0
        if i0 <= 0.0:
            raise NonFiniteOutput(f"{side} surface saturated or depleted with nonzero flux")
        return 2.0 * r_gas * t / f * np.arcsinh(f * j_n / (2.0 * i0))

    eta_neg = overpotential(j_neg, i0_neg, "negative")
    eta_pos = overpotential(j_pos, i0_pos, "positive")

    u_neg = float(params.neg.ocp(c_ss_neg / params.neg.c_s_max))
    u_pos = float(params.pos.ocp(c_ss_pos / params.pos.c_s_max))
    eta_s = eta_neg + u_neg + f * params.neg.r_film * j_neg - params.u_side_reaction
    voltage = (
        u_pos + eta_pos + f * params.pos.r_film * j_pos
        - u_neg - eta_neg - f * params.neg.r_film * j_neg
    )
    ocv = u_pos - u_neg

    theta_bar = mean_stoichiometry(state.c_neg, params.neg, params.n_radial)
    soc = (theta_bar - params.theta_neg_0) / (params.theta_neg_100 - params.theta_neg_0)

    out = PlantOutputs(
        soc=soc,
        voltage=voltage,
        eta_s=eta_s,
        eta_minus=eta_neg,
        eta_plus=eta_pos,
        temperature=t,
        i0_minus=i0_neg,
        i0_plus=i0_pos,
        j_n_minus=j_neg,
        j_n_plus=j_pos,
        c_ss_minus=c_ss_neg,
        c_ss_plus=c_ss_pos,
        ocv=ocv,
    )
    for name in ("soc", "voltage", "eta_s", "eta_minus", "eta_plus"):
        if not np.isfinite(getattr(out, name)):
            raise NonFiniteOutput(f"{name} is not finite")
    return out


def _diffuse_shell(
    conc: np.ndarray, d_s: float, j_n: float, dt: float, electrode: ElectrodeParams
) -> np.ndarray:
    """One backward-Euler step of spherical diffusion on one particle.

    Finite-volume form on shell midpoints: w_i dc_i/dt equals the net
    face flux, with zero flux at the center and outward molar flux j_n
    through the surface face. The step conserves sum(w_i c_i) up to the
    surface source exactly, which is what the lithium-conservation and
    charge-bookkeeping checks rely on.
    """
    n = conc.size
    dr = electrode.r_s / n
    w = _shell_weights(electrode.r_s, n)
    faces = np.arange(n + 1) * dr
    area = faces**2

    # interior face conductances d_s * A_f / dr, scaled by dt / w_i
    g = d_s * area[1:-1] / dr  # faces 1..n-1
    lower = dt * g / w[1:]  # coupling to shell i-1 for rows 1..n-1
    upper = dt * g / w[:-1]  # coupling to shell i+1 for rows 0..n-2

    rhs = conc.copy()
    rhs[-1] -= dt * area[-1] * j_n / w[-1]  # surface source, outward positive

    ab = np.zeros((3, n))
    ab[0, 1:] = -upper  # superdiagonal
    ab[1, :] = 1.0
    ab[1, :-1] += upper
    ab[1, 1:] += lower
    ab[2, :-1] = -lower  # subdiagonal
    return solve_banded((1, 1), ab, rhs)


def step_spm(state: PlantState, current: float, dt: float, params: PlantParams) -> PlantState:
    """Advance the plant by dt under the applied C-rate.

    Both particles take one implicit diffusion step with transport
    coefficients evaluated at the pre-step temperature; the thermal state
    takes one implicit step of the lumped heat balance with
    Q = I (V - V_oc) (entropic heating neglected).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    out = observe(state, current, params)

    i_dens = params.current_density(current)
    j_neg, j_pos = molar_fluxes(i_dens, params)
    t_pre = state.temperature
    d_neg = arrhenius(params.neg.d_s_ref, params.neg.e_act_d, t_pre, params)
    d_pos = arrhenius(params.pos.d_s_ref, params.pos.e_act_d, t_pre, params)

    c_neg = _diffuse_shell(state.c_neg, d_neg, j_neg, dt, params.neg)
    c_pos = _diffuse_shell(state.c_pos, d_pos, j_pos, dt, params.pos)

    # lumped thermal ODE, backward Euler:
    # m c_P dT/dt = Q_dot - (T - T_amb)/R_th
    q_dot = i_dens * params.cell_area * (out.voltage - out.ocv)
    heat_cap = params.mass * params.heat_capacity
    t_new = (heat_cap / dt * t_pre + q_dot + params.t_amb / params.r_thermal) / (
        heat_cap / dt + 1.0 / params.r_thermal
    )

    new = PlantState(c_neg=c_neg, c_pos=c_pos, temperature=float(t_new))
    if not (np.all(np.isfinite(c_neg)) and np.all(np.isfinite(c_pos)) and np.isfinite(t_new)):
        raise NonFiniteState("plant state left the finite range")
    for el, conc, side in ((params.neg, c_neg, "negative"), (params.pos, c_pos, "positive")):
        slack = _CONC_RTOL * el.c_s_max
        if conc.min() < -slack or conc.max() > el.c_s_max + slack:
            raise ConcentrationOutOfRange(
                f"{side} shell concentration outside [0, c_s_max] "
                f"(min {conc.min():.6g}, max {conc.max():.6g}, c_s_max {el.c_s_max:.6g})"
            )
    return new
