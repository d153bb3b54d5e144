"""Road motion planning benchmark.

Two planners (a reachable-set driving-corridor planner with a tracking
optimal-control stage, and a Frenet-frame sampling planner) plus the
evaluation pipeline that scores them: feasibility checks, a quadratic
comfort/safety cost, and a closed-loop benchmark harness.
"""

from .scenario import (
    ControlInput,
    GoalSpec,
    Lanelet,
    LaneletNetwork,
    Obstacle,
    PlanningProblem,
    Scenario,
    ScenarioError,
    VehicleState,
    goal_reached,
    lane_center,
    load_scenario,
    obstacle_occupancy,
    parse_scenario,
    serialize_scenario,
)
from .dynamics import (
    DEFAULT_PARAMETERS,
    Trajectory,
    VehicleParameters,
    integrate_step,
    ks_derivative,
    reconstruct_inputs,
)

__all__ = [
    "ControlInput",
    "DEFAULT_PARAMETERS",
    "GoalSpec",
    "Lanelet",
    "LaneletNetwork",
    "Obstacle",
    "PlanningProblem",
    "Scenario",
    "ScenarioError",
    "Trajectory",
    "VehicleParameters",
    "VehicleState",
    "goal_reached",
    "integrate_step",
    "ks_derivative",
    "lane_center",
    "load_scenario",
    "obstacle_occupancy",
    "parse_scenario",
    "reconstruct_inputs",
    "serialize_scenario",
]
