"""Minimal-time steering of indistinguishable crowds through a convex control region."""
from .control import (CaratheodoryReport, ControlPlan, SimulationResult, eval_control,
                      simulate, verify_caratheodory)
from .estimator import CrowdSteeringController
from .exceptions import (CrowdCtlError, HorizonTooShort, InfeasibleAssignment,
                         InfeasibleScenario, IntegrationDiverged, PerturbationFailed,
                         RadiiDegenerate, ScenarioError, SizeMismatch, TooLargeN,
                         WaypointNotFound)
from .flow import ConvexRegion, HittingTimes, VectorField, flow, hitting_time
from .mintime import (MinimalTimeReport, approx_minimal_time, brute_force_minimal_time,
                      configuration_distance, exact_minimal_time)
from .params import Params
from .pipeline import plan, plan_approximate, plan_exact, run
from .scenario import Scenario, bundled_scenario, load_scenario, scenario_hash
from .transport import check_non_crossing, hungarian

__version__ = "0.1.0"

__all__ = [
    "CaratheodoryReport", "ControlPlan", "SimulationResult", "eval_control", "simulate",
    "verify_caratheodory", "CrowdSteeringController", "CrowdCtlError", "HorizonTooShort",
    "InfeasibleAssignment", "InfeasibleScenario", "IntegrationDiverged", "PerturbationFailed",
    "RadiiDegenerate", "ScenarioError", "SizeMismatch", "TooLargeN", "WaypointNotFound",
    "ConvexRegion", "HittingTimes", "VectorField", "flow", "hitting_time",
    "MinimalTimeReport", "approx_minimal_time", "brute_force_minimal_time",
    "configuration_distance", "exact_minimal_time", "Params", "plan", "plan_approximate",
    "plan_exact", "run", "Scenario", "bundled_scenario", "load_scenario", "scenario_hash",
    "check_non_crossing",
    "hungarian",
]
