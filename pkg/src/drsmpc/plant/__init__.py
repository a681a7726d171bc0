"""Battery cell plant and the synthetic heat-rod test plant."""

from .heat_rod import HeatRodParams, initial_rod_state, rod_energy, step_heat_rod
from .params import (
    ElectrodeParams,
    OcpTable,
    PlantParams,
    arrhenius,
    default_params,
    load_plant_config,
)
from .spm import (
    PlantOutputs,
    PlantState,
    initial_state,
    molar_fluxes,
    observe,
    step_spm,
    total_moles,
)

__all__ = [
    "ElectrodeParams",
    "HeatRodParams",
    "OcpTable",
    "PlantOutputs",
    "PlantParams",
    "PlantState",
    "arrhenius",
    "default_params",
    "initial_rod_state",
    "initial_state",
    "load_plant_config",
    "molar_fluxes",
    "observe",
    "rod_energy",
    "step_heat_rod",
    "step_spm",
    "total_moles",
]
