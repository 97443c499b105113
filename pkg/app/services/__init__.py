"""
Services package for the MPPI-IPDDP trajectory planner.
"""

from .planner import PlannerConfig, PlanResult, build_smoothing_ocp, evaluate_plan, plan
from .scenario import Scenario, build_planner_config, build_scenario, load_scenario_file
from .storage import save_results

__all__ = [
	"PlannerConfig",
	"PlanResult",
	"Scenario",
	"build_planner_config",
	"build_scenario",
	"build_smoothing_ocp",
	"evaluate_plan",
	"load_scenario_file",
	"plan",
	"save_results",
]
