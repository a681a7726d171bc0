"""Synthetic 1-D heat-rod plant for fast controller tests.

Linear in state and input: node temperatures diffuse along the rod
(implicit step, insulated ends) while the control input injects heat
through the left face. The natural constraint output is the maximum
node temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ..errors import NonFiniteState


@dataclass(frozen=True)
class HeatRodParams:
    """Rod discretization and material constants."""

    n_nodes: int = 50
    length: float = 1.0
    diffusivity: float = 1e-3  # m^2/s

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if self.length <= 0 or self.diffusivity <= 0:
            raise ValueError("length and diffusivity must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n_nodes


def initial_rod_state(params: HeatRodParams, temperature: float = 0.0) -> np.ndarray:
    return np.full(params.n_nodes, float(temperature))


def step_heat_rod(
    state: np.ndarray, flux: float, dt: float, params: HeatRodParams
) -> np.ndarray:
    """One backward-Euler diffusion step with boundary heat flux.

    The flux enters the leftmost cell as a source, so the total energy
    sum(u) * dx grows by flux * dt per step exactly; with zero flux the
    rod relaxes to its uniform mean.
    """
    u = np.asarray(state, dtype=float)
    if u.ndim != 1 or u.size != params.n_nodes:
        raise ValueError(f"state must have {params.n_nodes} nodes")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = params.n_nodes
    dx = params.dx
    r = params.diffusivity * dt / dx**2

    rhs = u.copy()
    rhs[0] += dt * flux / dx

    # insulated ends: interior faces only
    ab = np.zeros((3, n))
    ab[1, :] = 1.0
    ab[1, :-1] += r
    ab[1, 1:] += r
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    out = solve_banded((1, 1), ab, rhs)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("heat-rod state left the finite range")
    return out


def rod_energy(state: np.ndarray, params: HeatRodParams) -> float:
    return float(np.sum(state) * params.dx)
