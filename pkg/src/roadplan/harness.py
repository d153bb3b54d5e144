"""Benchmark harness: runs planners over scenario files under a wall-clock
budget, independently verifies every solution, scores it, and aggregates a
leaderboard. Nothing a planner reports is trusted: a result only counts as
solved after the harness itself re-checks collision freedom, kinematic
feasibility, road compliance and goal attainment."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import frenet as frenet_mod
from . import reach as reach_mod
from .drivability import CostBreakdown, check_drivability, evaluate_cost
from .dynamics import Trajectory, VehicleParameters
from .errors import PlanningFailure, TimeoutExceeded
from .reactive import IdmParameters, ReactiveWorld
from .route import RouteError, route_reference
from .scenario import (
    Obstacle,
    PlanningProblem,
    Scenario,
    VehicleState,
    goal_reached,
    load_scenario,
)

STATUS_SOLVED = "solved"
STATUS_INFEASIBLE = "infeasible-output"
STATUS_FAILURE = "planner-failure"
STATUS_TIMEOUT = "timeout"

PLANNER_IDS = ("reach", "frenet")


@dataclass(frozen=True)
class HarnessConfig:
    vehicle: VehicleParameters = field(default_factory=VehicleParameters)
    reach: reach_mod.ReachConfig = field(default_factory=reach_mod.ReachConfig)
    frenet: frenet_mod.FrenetConfig = field(default_factory=frenet_mod.FrenetConfig)
    idm: IdmParameters = field(default_factory=IdmParameters)
    exact_road_check: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "HarnessConfig":
        return cls(
            vehicle=VehicleParameters.from_dict(data.get("vehicle", {})),
            reach=reach_mod.ReachConfig.from_dict(data.get("reach", {})),
            frenet=frenet_mod.FrenetConfig.from_dict(data.get("frenet", {})),
            idm=IdmParameters.from_dict(data.get("idm", {})),
            exact_road_check=data.get("exact_road_check", False),
        )

    @classmethod
    def from_file(cls, path) -> "HarnessConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(eq=False)
class ScenarioResult:
    scenario_id: str
    planner_id: str
    status: str
    cost: CostBreakdown | None
    wall_time: float
    detail: str = ""
    trajectory: Trajectory | None = None


@dataclass(frozen=True)
class LeaderboardEntry:
    planner_id: str
    solved: int
    top1: int


def _plan(planner_id: str, sc: Scenario, cfg: HarnessConfig,
          deadline: float | None) -> Trajectory:
    if planner_id == "reach":
        return reach_mod.plan(sc, cfg.vehicle, cfg.reach, deadline=deadline)
    if planner_id == "frenet":
        return frenet_mod.run_receding_horizon(sc, cfg.vehicle, cfg.frenet,
                                               deadline=deadline)
    raise ValueError(f"unknown planner '{planner_id}' (expected one of {PLANNER_IDS})")


def verify_solution(traj: Trajectory, sc: Scenario, cfg: HarnessConfig) -> tuple[bool, str]:
    """Independent acceptance check: initial state, the three feasibility
    conditions, and goal attainment inside the time window."""
    init = sc.problem.initial_state
    first = traj.states[0]
    if max(abs(first.x - init.x), abs(first.y - init.y), abs(first.v - init.v),
           abs(first.delta - init.delta), abs(first.psi - init.psi)) > 1e-6:
        return False, "solution does not start at the initial state"
    if abs(traj.dt - sc.dt) > 1e-12:
        return False, "solution time step differs from the scenario"
    report = check_drivability(traj, sc, cfg.vehicle, exact_roads=cfg.exact_road_check)
    if not report.feasible:
        name, step = report.first_violation
        return False, f"violates {name} at step {step}"
    t0 = sc.problem.initial_time
    if not any(goal_reached(s, t0 + k, sc.problem.goal, sc.network)
               for k, s in enumerate(traj.states)):
        return False, "never reaches the goal window"
    return True, ""


def _score(traj: Trajectory, sc: Scenario, cfg: HarnessConfig) -> CostBreakdown:
    _, frame = route_reference(sc)
    return evaluate_cost(traj, sc, frame, cfg.vehicle)


def run_planner_on_scenario(planner_id: str, sc: Scenario, budget: float,
                            cfg: HarnessConfig | None = None,
                            reactive: bool = False) -> ScenarioResult:
    """Run one planner on one scenario under a wall-clock budget."""
    cfg = cfg or HarnessConfig()
    start = time.perf_counter()
    deadline = start + budget
    try:
        if reactive:
            traj, verify_sc = _run_reactive(planner_id, sc, cfg, deadline)
        else:
            traj, verify_sc = _plan(planner_id, sc, cfg, deadline), sc
        wall = time.perf_counter() - start
        if wall > budget:
            return ScenarioResult(sc.scenario_id, planner_id, STATUS_TIMEOUT, None, wall,
                                  detail="budget exceeded")
        ok, detail = verify_solution(traj, verify_sc, cfg)
        if not ok:
            return ScenarioResult(sc.scenario_id, planner_id, STATUS_INFEASIBLE, None,
                                  wall, detail=detail, trajectory=traj)
        cost = _score(traj, verify_sc, cfg)
        return ScenarioResult(sc.scenario_id, planner_id, STATUS_SOLVED, cost, wall,
                              trajectory=traj)
    except TimeoutExceeded:
        return ScenarioResult(sc.scenario_id, planner_id, STATUS_TIMEOUT, None,
                              time.perf_counter() - start, detail="budget exceeded")
    except (PlanningFailure, RouteError) as exc:
        return ScenarioResult(sc.scenario_id, planner_id, STATUS_FAILURE, None,
                              time.perf_counter() - start, detail=str(exc))


def _scenario_view(sc: Scenario, k_now: int, state: VehicleState,
                   predictions: dict[int, np.ndarray]) -> Scenario:
    """Scenario as seen at step k_now: current state, predicted obstacles,
    goal window shifted to the new time origin."""
    goal = sc.problem.goal
    from .scenario import GoalSpec

    shifted_goal = GoalSpec(
        lanelet_ids=goal.lanelet_ids, polygon=goal.polygon,
        v_interval=goal.v_interval,
        t_interval=(max(goal.t_interval[0] - k_now, 0), goal.t_interval[1] - k_now),
    )
    obstacles = []
    for ob in sc.obstacles:
        states = predictions.get(ob.id)
        if states is None:
            continue
        obstacles.append(Obstacle(id=ob.id, length=ob.length, width=ob.width,
                                  states=np.array(states)))
    view = Scenario(
        dt=sc.dt, network=sc.network, obstacles=tuple(obstacles),
        problem=PlanningProblem(initial_state=state, goal=shifted_goal),
        horizon=max(sc.horizon - k_now, 1), scenario_id=sc.scenario_id,
    )
    return view


def _run_reactive(planner_id: str, sc: Scenario, cfg: HarnessConfig,
                  deadline: float) -> tuple[Trajectory, Scenario]:
    """Closed loop against IDM traffic: replan, execute a stride, let the
    obstacles react to the executed motion, repeat. Returns the executed
    trajectory plus the realized scenario it must be verified against."""
    world = ReactiveWorld(sc, cfg.idm)
    realized: dict[int, list[tuple]] = {oid: [st] for oid, st in world.states().items()}
    state = sc.problem.initial_state
    executed_states = [state]
    executed_inputs: list = []
    goal = sc.problem.goal
    horizon = min(sc.horizon, goal.t_interval[1])
    stride = cfg.reach.replan_stride if planner_id == "reach" else cfg.frenet.replan_stride
    k = 0
    done = goal_reached(state, 0, goal, sc.network)
    while not done and k < horizon:
        if time.perf_counter() > deadline:
            raise TimeoutExceeded("budget exhausted in the reactive loop")
        lookahead = max(horizon - k, 1)
        predictions = world.predict(lookahead)
        view = _scenario_view(sc, k, state, predictions)
        traj = _plan(planner_id, view, cfg, deadline)
        n_exec = min(stride, len(traj.states) - 1, horizon - k)
        if n_exec <= 0:
            raise PlanningFailure("planner returned an empty trajectory", step=k)
        for j in range(1, n_exec + 1):
            executed_states.append(traj.states[j])
            executed_inputs.append(traj.inputs[j - 1])
            world.step(executed_states[-1], cfg.vehicle.length)
            for oid, st in world.states().items():
                realized[oid].append(st)
            k += 1
            if goal_reached(executed_states[-1], k, goal, sc.network):
                done = True
                break
    if not done:
        raise PlanningFailure("goal not reached within the time window", step=k)

    obstacles = tuple(
        Obstacle(id=ob.id, length=ob.length, width=ob.width,
                 states=np.array(realized[ob.id]))
        for ob in sc.obstacles if ob.id in realized
    )
    realized_sc = Scenario(dt=sc.dt, network=sc.network, obstacles=obstacles,
                           problem=sc.problem, horizon=sc.horizon,
                           scenario_id=sc.scenario_id)
    return Trajectory(sc.dt, tuple(executed_states), tuple(executed_inputs)), realized_sc


# ---------------------------------------------------------------------------
# benchmark execution


def _job(path: str, planner_id: str, budget: float, cfg_data: dict | None,
         reactive: bool) -> ScenarioResult:
    cfg = HarnessConfig.from_dict(cfg_data) if cfg_data else HarnessConfig()
    sc = load_scenario(path)
    return run_planner_on_scenario(planner_id, sc, budget, cfg, reactive=reactive)


def run_benchmark(scenario_paths, planner_ids, budget: float, workers: int = 2,
                  cfg_data: dict | None = None, reactive: bool = False) -> list[ScenarioResult]:
    """Planner x scenario grid, dispatched to a bounded worker pool."""
    jobs = sorted((str(Path(p)), planner) for p in scenario_paths for planner in planner_ids)
    if workers <= 1:
        results = [_job(path, planner, budget, cfg_data, reactive)
                   for path, planner in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_job, path, planner, budget, cfg_data, reactive)
                       for path, planner in jobs]
            results = [f.result() for f in futures]
    results.sort(key=lambda r: (r.scenario_id, r.planner_id))
    return results


def build_leaderboard(results) -> list[LeaderboardEntry]:
    """Solved counts plus top-1 awards (lowest total cost per scenario; ties
    award every planner that achieves the minimum)."""
    planners = sorted({r.planner_id for r in results})
    solved = {p: 0 for p in planners}
    top1 = {p: 0 for p in planners}
    by_scenario: dict[str, list] = {}
    for r in results:
        if r.status == STATUS_SOLVED:
            solved[r.planner_id] += 1
            by_scenario.setdefault(r.scenario_id, []).append(r)
    for rows in by_scenario.values():
        best = min(r.cost.total for r in rows)
        for r in rows:
            if r.cost.total <= best + 1e-12:
                top1[r.planner_id] += 1
    entries = [LeaderboardEntry(p, solved[p], top1[p]) for p in planners]
    entries.sort(key=lambda e: (-e.top1, -e.solved, e.planner_id))
    return entries


def leaderboard_csv(entries) -> str:
    lines = ["planner,solved,top1"]
    lines += [f"{e.planner_id},{e.solved},{e.top1}" for e in entries]
    return "\n".join(lines) + "\n"


def results_csv(results) -> str:
    lines = ["scenario,planner,status,cost_total,cost_jerk,cost_sr,cost_dist,cost_lc,wall_time_s"]
    for r in results:
        if r.cost is not None:
            cost_cols = (f"{r.cost.total:.6f},{r.cost.j_jerk:.6f},{r.cost.j_sr:.6f},"
                         f"{r.cost.j_dist:.6f},{r.cost.j_lc:.6f}")
        else:
            cost_cols = ",,,,"
        lines.append(f"{r.scenario_id},{r.planner_id},{r.status},{cost_cols},"
                     f"{r.wall_time:.3f}")
    return "\n".join(lines) + "\n"
