"""Scenario data model and the JSON document formats.

A scenario bundles a lanelet network, dynamic obstacle predictions and one
planning problem (initial state plus goal region with velocity and time-step
windows). The document layout is:

    {"dt": 0.1, "horizon": 60,
     "lanelets": [{"id": 1, "left": [[x, y], ...], "right": [[x, y], ...],
                   "successors": [2], "adj_left": null, "adj_right": 3,
                   "speed_limit": null}, ...],
     "obstacles": [{"id": 10, "length": 4.5, "width": 2.0,
                    "states": [{"t": 0, "x": .., "y": .., "psi": .., "v": ..}, ...]}],
     "problem": {"initial": {"x": .., "y": .., "delta": .., "v": .., "psi": ..},
                 "goal": {"lanelets": [2] | "polygon": [[x, y], ...],
                          "v": [lo, hi], "t": [lo, hi]}}}

Solution documents are {"scenario_id", "planner", "dt", "states", "inputs"}
with one input less than states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .curvilinear import CurvilinearFrame
from .geometry import ConvexPolygon, oriented_box, point_in_ring


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario/solution document."""


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    delta: float
    v: float
    psi: float

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.delta, self.v, self.psi])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]), float(arr[4]))


@dataclass(frozen=True)
class ControlInput:
    v_delta: float
    a: float


def _seg_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _polyline_self_intersects(pts: np.ndarray) -> bool:
    n = len(pts) - 1
    for i in range(n):
        for j in range(i + 2, n):
            if _seg_properly_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]):
                return True
    return False


@dataclass(eq=False)
class Lanelet:
    id: int
    left: np.ndarray
    right: np.ndarray
    successors: tuple[int, ...] = ()
    adj_left: int | None = None
    adj_right: int | None = None
    speed_limit: float | None = None

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise ScenarioError(f"lanelet {self.id}: boundaries must be vertex lists")
        if len(self.left) != len(self.right):
            raise ScenarioError(
                f"lanelet {self.id}: left boundary has {len(self.left)} vertices, "
                f"right has {len(self.right)}"
            )
        if len(self.left) < 2:
            raise ScenarioError(f"lanelet {self.id}: boundaries need at least 2 vertices")
        for name, pts in (("left", self.left), ("right", self.right)):
            if _polyline_self_intersects(pts):
                raise ScenarioError(f"lanelet {self.id}: {name} boundary self-intersects")
        if self.speed_limit is not None and self.speed_limit <= 0:
            raise ScenarioError(f"lanelet {self.id}: speed limit must be positive")
        self.successors = tuple(int(s) for s in self.successors)

    @cached_property
    def center(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)

    @cached_property
    def frame(self) -> CurvilinearFrame:
        return CurvilinearFrame(self.center)

    @property
    def length(self) -> float:
        return self.frame.length

    @cached_property
    def ring(self) -> np.ndarray:
        """Boundary ring: left boundary followed by the reversed right boundary."""
        return np.concatenate([self.left, self.right[::-1]], axis=0)

    def width_at(self, s: float) -> float:
        d = np.hypot(*(self.left - self.right).T)
        i = int(np.clip(np.searchsorted(self.frame.cum_len, s), 0, len(d) - 1))
        return float(d[i])

    def contains_point(self, p) -> bool:
        return point_in_ring(self.ring, p)


def lane_center(lanelet: Lanelet) -> np.ndarray:
    """Per-vertex midpoint of the two boundaries."""
    return lanelet.center


@dataclass(eq=False)
class LaneletNetwork:
    lanelets: dict[int, Lanelet]

    def __post_init__(self):
        for lid, lanelet in self.lanelets.items():
            refs = list(lanelet.successors)
            refs += [r for r in (lanelet.adj_left, lanelet.adj_right) if r is not None]
            for ref in refs:
                if ref not in self.lanelets:
                    raise ScenarioError(f"lanelet {lid} references undefined lanelet {ref}")
            if lanelet.adj_left is not None:
                other = self.lanelets[lanelet.adj_left]
                if other.adj_right != lid:
                    raise ScenarioError(
                        f"adjacency not symmetric between lanelets {lid} and {lanelet.adj_left}"
                    )
            if lanelet.adj_right is not None:
                other = self.lanelets[lanelet.adj_right]
                if other.adj_left != lid:
                    raise ScenarioError(
                        f"adjacency not symmetric between lanelets {lid} and {lanelet.adj_right}"
                    )

    def __getitem__(self, lid: int) -> Lanelet:
        return self.lanelets[lid]

    def __iter__(self):
        return iter(self.lanelets.values())

    def ids(self) -> list[int]:
        return sorted(self.lanelets)

    def lanelets_containing(self, p) -> list[int]:
        return [lid for lid in self.ids() if self.lanelets[lid].contains_point(p)]


@dataclass(eq=False)
class Obstacle:
    id: int
    length: float
    width: float
    states: np.ndarray  # (n, 4) columns x, y, psi, v

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ScenarioError(f"obstacle {self.id}: extents must be positive")
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 4 or len(self.states) == 0:
            raise ScenarioError(f"obstacle {self.id}: needs at least one (x, y, psi, v) state")

    def state_at(self, k: int) -> np.ndarray:
        """State at time step k; frozen at the last recorded state afterwards."""
        return self.states[min(max(k, 0), len(self.states) - 1)]


def obstacle_occupancy(obstacle: Obstacle, k: int) -> ConvexPolygon:
    """Oriented bounding box of the obstacle at time step k."""
    x, y, psi, _ = obstacle.state_at(k)
    return oriented_box(x, y, psi, obstacle.length, obstacle.width)


@dataclass(eq=False)
class GoalSpec:
    lanelet_ids: tuple[int, ...] | None
    polygon: ConvexPolygon | None
    v_interval: tuple[float, float]
    t_interval: tuple[int, int]

    def __post_init__(self):
        if (self.lanelet_ids is None) == (self.polygon is None):
            raise ScenarioError("goal must give either lanelet ids or a polygon")
        if self.lanelet_ids is not None and len(self.lanelet_ids) == 0:
            raise ScenarioError("goal lanelet list is empty")
        if self.v_interval[0] > self.v_interval[1]:
            raise ScenarioError("goal velocity interval is reversed")
        if self.t_interval[0] > self.t_interval[1]:
            raise ScenarioError("goal time interval is reversed")


def goal_reached(state: VehicleState, k: int, goal: GoalSpec, net: LaneletNetwork) -> bool:
    """Reference-point membership in the goal region with velocity/time windows."""
    if not (goal.v_interval[0] <= state.v <= goal.v_interval[1]):
        return False
    if not (goal.t_interval[0] <= k <= goal.t_interval[1]):
        return False
    p = (state.x, state.y)
    if goal.polygon is not None:
        return goal.polygon.contains_point(p)
    return any(net[lid].contains_point(p) for lid in goal.lanelet_ids)


@dataclass(eq=False)
class PlanningProblem:
    initial_state: VehicleState
    goal: GoalSpec
    initial_time: int = 0


@dataclass(eq=False)
class Scenario:
    dt: float
    network: LaneletNetwork
    obstacles: tuple[Obstacle, ...]
    problem: PlanningProblem
    horizon: int
    scenario_id: str = ""

    def __post_init__(self):
        if self.dt <= 0:
            raise ScenarioError(f"dt must be positive, got {self.dt}")
        if self.horizon < 0:
            raise ScenarioError("horizon must be nonnegative")
        p = self.problem.initial_state.position()
        if not self.network.lanelets_containing(p):
            raise ScenarioError("initial position lies outside the lanelet network")
        if self.problem.goal.lanelet_ids is not None:
            for lid in self.problem.goal.lanelet_ids:
                if lid not in self.network.lanelets:
                    raise ScenarioError(f"goal references undefined lanelet {lid}")


# ---------------------------------------------------------------------------
# parsing / serialization


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"{context}: missing key '{key}'")
    return mapping[key]


def _opt_int(value):
    return None if value is None else int(value)


def parse_scenario(document: str, scenario_id: str = "") -> Scenario:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ScenarioError("top-level document must be an object")

    dt = float(_require(data, "dt", "document"))
    horizon = int(_require(data, "horizon", "document"))

    lanelets: dict[int, Lanelet] = {}
    for entry in _require(data, "lanelets", "document"):
        lid = int(_require(entry, "id", "lanelet"))
        if lid in lanelets:
            raise ScenarioError(f"duplicate lanelet id {lid}")
        lanelets[lid] = Lanelet(
            id=lid,
            left=_require(entry, "left", f"lanelet {lid}"),
            right=_require(entry, "right", f"lanelet {lid}"),
            successors=tuple(entry.get("successors", ())),
            adj_left=_opt_int(entry.get("adj_left")),
            adj_right=_opt_int(entry.get("adj_right")),
            speed_limit=entry.get("speed_limit"),
        )
    network = LaneletNetwork(lanelets)

    obstacles = []
    for entry in data.get("obstacles", ()):
        oid = int(_require(entry, "id", "obstacle"))
        raw_states = _require(entry, "states", f"obstacle {oid}")
        states = np.zeros((len(raw_states), 4))
        for i, st in enumerate(raw_states):
            if int(_require(st, "t", f"obstacle {oid} state")) != i:
                raise ScenarioError(
                    f"obstacle {oid}: states must be indexed by consecutive steps from 0"
                )
            states[i] = (st["x"], st["y"], st["psi"], st["v"])
        obstacles.append(
            Obstacle(id=oid, length=float(entry["length"]), width=float(entry["width"]), states=states)
        )

    prob = _require(data, "problem", "document")
    init = _require(prob, "initial", "problem")
    initial = VehicleState(
        x=float(init["x"]), y=float(init["y"]), delta=float(init["delta"]),
        v=float(init["v"]), psi=float(init["psi"]),
    )
    goal_raw = _require(prob, "goal", "problem")
    has_lanelets = "lanelets" in goal_raw and goal_raw["lanelets"] is not None
    has_polygon = "polygon" in goal_raw and goal_raw["polygon"] is not None
    goal = GoalSpec(
        lanelet_ids=tuple(int(i) for i in goal_raw["lanelets"]) if has_lanelets else None,
        polygon=ConvexPolygon(goal_raw["polygon"]) if has_polygon else None,
        v_interval=(float(goal_raw["v"][0]), float(goal_raw["v"][1])),
        t_interval=(int(goal_raw["t"][0]), int(goal_raw["t"][1])),
    )
    problem = PlanningProblem(initial_state=initial, goal=goal)

    return Scenario(
        dt=dt,
        network=network,
        obstacles=tuple(obstacles),
        problem=problem,
        horizon=horizon,
        scenario_id=scenario_id,
    )


def scenario_to_dict(sc: Scenario) -> dict:
    lanelets = []
    for lid in sc.network.ids():
        lanelet = sc.network[lid]
        lanelets.append(
            {
                "id": lanelet.id,
                "left": lanelet.left.tolist(),
                "right": lanelet.right.tolist(),
                "successors": list(lanelet.successors),
                "adj_left": lanelet.adj_left,
                "adj_right": lanelet.adj_right,
                "speed_limit": lanelet.speed_limit,
            }
        )
    obstacles = []
    for ob in sc.obstacles:
        states = [
            {"t": i, "x": st[0], "y": st[1], "psi": st[2], "v": st[3]}
            for i, st in enumerate(ob.states.tolist())
        ]
        obstacles.append({"id": ob.id, "length": ob.length, "width": ob.width, "states": states})
    goal = sc.problem.goal
    goal_dict: dict = {}
    if goal.lanelet_ids is not None:
        goal_dict["lanelets"] = list(goal.lanelet_ids)
    else:
        goal_dict["polygon"] = goal.polygon.vertices.tolist()
    goal_dict["v"] = list(goal.v_interval)
    goal_dict["t"] = list(goal.t_interval)
    init = sc.problem.initial_state
    return {
        "dt": sc.dt,
        "horizon": sc.horizon,
        "lanelets": lanelets,
        "obstacles": obstacles,
        "problem": {
            "initial": {"x": init.x, "y": init.y, "delta": init.delta, "v": init.v, "psi": init.psi},
            "goal": goal_dict,
        },
    }


def serialize_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)


def load_scenario(path) -> Scenario:
    from pathlib import Path

    path = Path(path)
    return parse_scenario(path.read_text(), scenario_id=path.stem)
