from .engine import SimTrace, compare, lowest_attention_neighbor, mean_scores, packaged_normalization, run
from .models import PRESETS, BehaviorPreset, equilibrium_gap, idm_acceleration, mobil_gain, preset
from .scenario import (
    EGO,
    SHIPPED_SCENARIOS,
    AssessmentConfig,
    Scenario,
    VehicleSpec,
    load_scenario,
    shipped_scenario,
    shipped_scenario_path,
)

__all__ = [
    "EGO", "PRESETS", "SHIPPED_SCENARIOS", "AssessmentConfig", "BehaviorPreset", "Scenario",
    "SimTrace", "VehicleSpec", "compare", "equilibrium_gap", "idm_acceleration",
    "load_scenario", "lowest_attention_neighbor", "mean_scores", "mobil_gain", "packaged_normalization", "preset", "run",
    "shipped_scenario", "shipped_scenario_path",
]
