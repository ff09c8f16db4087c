"""Energy-efficient power allocation and user-RB association for uplink hybrid NOMA-OMA."""

from .channel import Scenario, ScenarioConfig, draw_scenario
from .cluster import ClusterInstance, EeSolution, maximize_ee, maximize_se, min_powers
from .matching import Matching, SystemSolution, swap_match, system_ee
from .oma import oma_maximize_ee
from .two_user import solve_case1, solve_case2

__all__ = [
    "ClusterInstance", "EeSolution", "Matching", "Scenario", "ScenarioConfig", "SystemSolution",
    "draw_scenario", "maximize_ee", "maximize_se", "min_powers", "oma_maximize_ee",
    "solve_case1", "solve_case2", "swap_match", "system_ee",
]
