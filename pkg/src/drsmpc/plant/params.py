"""Cell parameters, open-circuit-potential tables, and config-file loading.

Parameters are read from a plain-text ``key = value`` file (SI units, see
``data/default_cell.ini`` for the documented default set) with the two
open-circuit-potential curves supplied as two-column CSV files
(stoichiometry, volts) referenced from the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigError

FARADAY = 96485.33212  # C/mol
GAS_CONSTANT = 8.314462618  # J/(mol K)


class OcpTable:
    """Tabulated open-circuit potential U(theta), linearly interpolated.

    The table must be strictly increasing in stoichiometry and strictly
    decreasing in potential (both electrodes are tabulated against their
    own lithiation fraction).
    """

    def __init__(self, theta, volts):
        theta = np.asarray(theta, dtype=float)
        volts = np.asarray(volts, dtype=float)
        if theta.ndim != 1 or theta.shape != volts.shape or theta.size < 2:
            raise ConfigError("OCP table needs two equal-length columns (>= 2 rows)")
        if not np.all(np.diff(theta) > 0):
            raise ConfigError("OCP stoichiometry breakpoints must be strictly increasing")
        if not np.all(np.diff(volts) < 0):
            raise ConfigError("OCP must be strictly decreasing in stoichiometry")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(volts))):
            raise ConfigError("OCP table contains non-finite entries")
        self.theta = theta
        self.volts = volts

    def __call__(self, theta):
        return np.interp(theta, self.theta, self.volts)

    @classmethod
    def from_csv(cls, path) -> "OcpTable":
        data = np.loadtxt(path, delimiter=",", comments="#")
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError(f"{path}: expected two columns (stoichiometry, volts)")
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class ElectrodeParams:
    """Per-electrode solid-phase and kinetic parameters (SI units)."""

    d_s_ref: float  # solid diffusivity at t_ref [m^2/s]
    r_s: float  # particle radius [m]
    c_s_max: float  # max solid concentration [mol/m^3]
    k_ref: float  # reaction rate constant at t_ref [A m^2.5 mol^-1.5]
    area_density: float  # active surface area per electrode volume [1/m]
    thickness: float  # electrode thickness [m]
    r_film: float  # film resistance [ohm m^2]
    e_act_d: float  # Arrhenius activation energy of d_s [J/mol]
    e_act_k: float  # Arrhenius activation energy of k [J/mol]
    ocp: OcpTable

    @property
    def eps_solid(self) -> float:
        """Active-material volume fraction implied by a = 3 eps/R_s."""
        return self.area_density * self.r_s / 3.0


@dataclass(frozen=True)
class PlantParams:
    """Full parameter set of the single-particle cell plant."""

    neg: ElectrodeParams
    pos: ElectrodeParams
    # stoichiometry windows: negative defines SOC; positive is used for
    # initialization only
    theta_neg_0: float
    theta_neg_100: float
    theta_pos_0: float
    theta_pos_100: float
    # thermal
    mass: float  # cell mass [kg]
    heat_capacity: float  # [J/(kg K)]
    r_thermal: float  # thermal resistance to ambient [K/W]
    t_amb: float  # ambient temperature [K]
    # kinetics / misc
    u_side_reaction: float = 0.0  # side-reaction equilibrium potential [V]
    c_e: float = 1000.0  # (constant) electrolyte concentration [mol/m^3]
    t_ref: float = 298.15  # Arrhenius reference temperature [K]
    n_radial: int = 50  # radial shells per electrode
    cell_area: float = 1.0  # electrode plate area [m^2]
    capacity_ah: float = field(default=0.0)  # nominal capacity [A h]; 0 -> derived
    faraday: float = FARADAY
    gas_constant: float = GAS_CONSTANT

    def __post_init__(self):
        if self.capacity_ah <= 0.0:
            object.__setattr__(self, "capacity_ah", self.derived_capacity_ah())
        _validate(self)

    def derived_capacity_ah(self) -> float:
        """Capacity of the negative-electrode stoichiometry window [A h]."""
        n = self.neg
        coulombs_per_m2 = (
            self.faraday
            * n.c_s_max
            * n.eps_solid
            * n.thickness
            * (self.theta_neg_100 - self.theta_neg_0)
        )
        return coulombs_per_m2 * self.cell_area / 3600.0

    @property
    def i_1c(self) -> float:
        """Current density of a 1C charge [A/m^2]."""
        return self.capacity_ah / self.cell_area

    def current_density(self, c_rate: float) -> float:
        """Convert a C-rate input to applied current density [A/m^2]."""
        return c_rate * self.i_1c

    @property
    def state_dim(self) -> int:
        return 2 * self.n_radial + 1

    def with_overrides(self, **kwargs) -> "PlantParams":
        """Return a copy with top-level fields replaced."""
        return replace(self, **kwargs)


def _validate(p: PlantParams) -> None:
    for name, el in (("neg", p.neg), ("pos", p.pos)):
        for attr in ("d_s_ref", "r_s", "c_s_max", "k_ref", "area_density", "thickness"):
            if getattr(el, attr) <= 0:
                raise ConfigError(f"{name}.{attr} must be strictly positive")
        if el.r_film < 0 or el.e_act_d < 0 or el.e_act_k < 0:
            raise ConfigError(f"{name}: r_film and activation energies must be >= 0")
    for attr in ("mass", "heat_capacity", "r_thermal", "t_amb", "c_e", "t_ref", "cell_area"):
        if getattr(p, attr) <= 0:
            raise ConfigError(f"{attr} must be strictly positive")
    if not (0.0 <= p.theta_neg_0 < p.theta_neg_100 <= 1.0):
        raise ConfigError("need 0 <= theta_neg_0 < theta_neg_100 <= 1")
    if not (0.0 < p.theta_pos_100 < p.theta_pos_0 <= 1.0):
        raise ConfigError("need 0 < theta_pos_100 < theta_pos_0 <= 1 (positive delithiates on charge)")
    if p.u_side_reaction < 0:
        raise ConfigError("u_side_reaction must be >= 0")
    if p.n_radial < 3:
        raise ConfigError("n_radial must be >= 3")


def arrhenius(ref_value: float, e_act: float, temperature: float, params: PlantParams) -> float:
    """Temperature scaling ``ref * exp(E/R (1/t_ref - 1/T))``.

    Increasing in T for positive activation energy, so transport and
    kinetics slow down at low temperature.
    """
    return ref_value * np.exp(
        e_act / params.gas_constant * (1.0 / params.t_ref - 1.0 / temperature)
    )


# ---------------------------------------------------------------------------
# config file parsing

_ELECTRODE_KEYS = {
    "d_s_ref", "r_s", "c_s_max", "k_ref", "area_density", "thickness",
    "r_film", "e_act_d", "e_act_k",
}
_SCALAR_KEYS = {
    "theta_neg_0", "theta_neg_100", "theta_pos_0", "theta_pos_100",
    "mass", "heat_capacity", "r_thermal", "t_amb", "u_side_reaction",
    "c_e", "t_ref", "cell_area", "capacity_ah",
}
_INT_KEYS = {"n_radial"}


def parse_kv_file(path) -> dict[str, str]:
    """Parse a ``key = value`` file with ``#`` comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_plant_config(path) -> PlantParams:
    """Load :class:`PlantParams` from a key = value file.

    OCP curves are referenced via ``neg.ocp_csv`` / ``pos.ocp_csv`` keys,
    resolved relative to the config file location.
    """
    path = Path(path)
    kv = parse_kv_file(path)

    def pop(key: str) -> str:
        try:
            return kv.pop(key)
        except KeyError:
            raise ConfigError(f"{path}: missing required key {key!r}") from None

    electrodes = {}
    for side in ("neg", "pos"):
        vals = {k: float(pop(f"{side}.{k}")) for k in sorted(_ELECTRODE_KEYS)}
        ocp_ref = pop(f"{side}.ocp_csv")
        ocp_path = (path.parent / ocp_ref) if not Path(ocp_ref).is_absolute() else Path(ocp_ref)
        electrodes[side] = ElectrodeParams(ocp=OcpTable.from_csv(ocp_path), **vals)

    # capacity_ah is optional (0 -> derived); everything else required
    scalars = {}
    for k in sorted(_SCALAR_KEYS):
        if k == "capacity_ah" and k not in kv:
            continue
        scalars[k] = float(pop(k))
    ints = {k: int(pop(k)) for k in sorted(_INT_KEYS)}
    if kv:
        raise ConfigError(f"{path}: unknown keys {sorted(kv)}")
    return PlantParams(neg=electrodes["neg"], pos=electrodes["pos"], **scalars, **ints)


def default_params(**overrides) -> PlantParams:
    """Packaged representative graphite/NMC parameter set."""
    root = resources.files("drsmpc").joinpath("data")
    with resources.as_file(root.joinpath("default_cell.ini")) as cfg:
        params = load_plant_config(cfg)
    return params.with_overrides(**overrides) if overrides else params
