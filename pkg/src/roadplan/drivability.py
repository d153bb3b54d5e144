"""Trajectory feasibility checks and the solution cost function.

A trajectory is drivable when it is collision-free against the obstacle
predictions, reproducible by the single-track model within input limits, and
stays inside the road network. Feasible solutions are scored by four terms:
squared longitudinal jerk, squared steering rate, squared lane-center offset
and an exponential frontal-obstacle proximity term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvilinear import CurvilinearFrame, ProjectionError
from .dynamics import Trajectory, VehicleParameters, inputs_within_bounds, reconstruct_inputs
from .geometry import oriented_box, points_in_ring, polygons_intersect
from .scenario import Scenario, obstacle_occupancy

# term weights: jerk, steering rate, lane-center offset, obstacle proximity
W_JERK = 0.01
W_SR = 22.0
W_LC = 8.0
W_DIST = 5.0
W_DIST_DECAY = 0.2

DEFAULT_LANE_WIDTH = 3.5
KINEMATIC_TOL = 1e-3


class CostError(ValueError):
    """Cost evaluation failed (typically a frame projection failure)."""


@dataclass(frozen=True)
class FeasibilityReport:
    collision_free: bool
    kinematically_feasible: bool
    road_compliant: bool
    first_violation: tuple[str, int] | None

    @property
    def feasible(self) -> bool:
        return self.collision_free and self.kinematically_feasible and self.road_compliant

    def to_dict(self) -> dict:
        violation = None
        if self.first_violation is not None:
            violation = {"condition": self.first_violation[0], "step": self.first_violation[1]}
        return {
            "collision_free": self.collision_free,
            "kinematically_feasible": self.kinematically_feasible,
            "road_compliant": self.road_compliant,
            "feasible": self.feasible,
            "first_violation": violation,
        }


@dataclass(frozen=True)
class CostBreakdown:
    j_jerk: float
    j_sr: float
    j_dist: float
    j_lc: float
    total: float

    def to_dict(self) -> dict:
        return {
            "j_jerk": self.j_jerk,
            "j_sr": self.j_sr,
            "j_dist": self.j_dist,
            "j_lc": self.j_lc,
            "total": self.total,
        }


def _ego_boxes(traj: Trajectory, p: VehicleParameters):
    return [oriented_box(s.x, s.y, s.psi, p.length, p.width) for s in traj.states]


def check_collision_free(traj: Trajectory, sc: Scenario, p: VehicleParameters) -> tuple[bool, int | None]:
    """Ego occupancy against every obstacle occupancy, step by step."""
    if not sc.obstacles:
        return True, None
    ego_diag = 0.5 * np.hypot(p.length, p.width)
    t0 = sc.problem.initial_time
    for k, state in enumerate(traj.states):
        ego = None
        for ob in sc.obstacles:
            ox, oy, _, _ = ob.state_at(t0 + k)
            reach = ego_diag + 0.5 * np.hypot(ob.length, ob.width)
            if np.hypot(ox - state.x, oy - state.y) > reach:
                continue
            if ego is None:
                ego = oriented_box(state.x, state.y, state.psi, p.length, p.width)
            if polygons_intersect(ego, obstacle_occupancy(ob, t0 + k)):
                return False, k
    return True, None


def check_kinematic(traj: Trajectory, p: VehicleParameters,
                    tol: float = KINEMATIC_TOL) -> tuple[bool, int | None]:
    """Reconstructed inputs must respect the limits and reproduce the states."""
    if len(traj.states) < 2:
        return True, None
    _, residuals = reconstruct_inputs(traj, p)
    in_bounds = inputs_within_bounds(traj, p)
    bad = ~in_bounds | (residuals > tol)
    if bad.any():
        return False, int(np.argmax(bad))
    return True, None


def _box_sample_points(state, p: VehicleParameters) -> np.ndarray:
    box = oriented_box(state.x, state.y, state.psi, p.length, p.width)
    return np.concatenate([box.vertices, [[state.x, state.y]]], axis=0)


def _box_covered_exactly(state, p, lanelets) -> bool:
    # clip the ego box against each lanelet ring and compare the covered area;
    # lanelet interiors are disjoint, so the per-lanelet pieces add up
    box = oriented_box(state.x, state.y, state.psi, p.length, p.width)
    target = box.area
    covered = 0.0
    for lanelet in lanelets:
        covered += _clip_ring_area(lanelet.ring, box)
        if covered >= target - 1e-9:
            return True
    return covered >= target - 1e-9


def _clip_ring_area(ring: np.ndarray, box) -> float:
    # Sutherland-Hodgman with the convex box as clip region; the subject ring
    # may be non-convex, the area of the clipped output is still exact
    subject = list(ring)
    verts = box.vertices
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        edge = b - a
        out = []
        n = len(subject)
        if n == 0:
            return 0.0
        for j in range(n):
            cur, nxt = subject[j], subject[(j + 1) % n]
            c_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            n_in = edge[0] * (nxt[1] - a[1]) - edge[1] * (nxt[0] - a[0]) >= 0
            if c_in:
                out.append(cur)
            if c_in != n_in:
                d1 = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0])
                d2 = edge[0] * (nxt[1] - a[1]) - edge[1] * (nxt[0] - a[0])
                t = d1 / (d1 - d2)
                out.append(cur + t * (np.asarray(nxt) - np.asarray(cur)))
        subject = out
    if len(subject) < 3:
        return 0.0
    pts = np.asarray(subject)
    x, y = pts[:, 0], pts[:, 1]
    return abs(0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def check_road_compliance(traj: Trajectory, net, p: VehicleParameters,
                          exact: bool = False) -> tuple[bool, int | None]:
    """Ego box must stay inside the union of lanelet polygons.

    The default samples the four corners plus the center; `exact` computes the
    covered area by polygon clipping instead.
    """
    lanelets = list(net)
    rings = [l.ring for l in lanelets]
    for k, state in enumerate(traj.states):
        if exact:
            if not _box_covered_exactly(state, p, lanelets):
                return False, k
            continue
        pts = _box_sample_points(state, p)
        inside = np.zeros(len(pts), dtype=bool)
        for ring in rings:
            inside |= points_in_ring(ring, pts)
            if inside.all():
                break
        if not inside.all():
            return False, k
    return True, None


def check_drivability(traj: Trajectory, sc: Scenario, p: VehicleParameters,
                      tol: float = KINEMATIC_TOL, exact_roads: bool = False) -> FeasibilityReport:
    """All three conditions; the reported violation is the earliest one."""
    col_ok, col_k = check_collision_free(traj, sc, p)
    kin_ok, kin_k = check_kinematic(traj, p, tol)
    road_ok, road_k = check_road_compliance(traj, sc.network, p, exact=exact_roads)
    first = None
    candidates = [
        ("collision", col_k if not col_ok else None),
        ("kinematics", kin_k if not kin_ok else None),
        ("road", road_k if not road_ok else None),
    ]
    hits = [(k, name) for name, k in candidates if k is not None]
    if hits:
        k, name = min(hits)
        first = (name, k)
    return FeasibilityReport(col_ok, kin_ok, road_ok, first)


# ---------------------------------------------------------------------------
# cost function


def _longitudinal_jerk(v: np.ndarray, dt: float) -> np.ndarray:
    a = np.diff(v) / dt
    if len(a) == 0:
        return np.zeros(0)
    if len(a) == 1:
        return np.zeros(1)
    jerk = np.empty_like(a)
    jerk[1:-1] = (a[2:] - a[:-2]) / (2.0 * dt)
    jerk[0] = (a[1] - a[0]) / dt
    jerk[-1] = (a[-1] - a[-2]) / dt
    return jerk


def _nearest_center_offset(sc: Scenario, point, k: int) -> float:
    """Lateral offset to the nearest lane center among lanelets holding the point."""
    candidates = sc.network.lanelets_containing(point)
    if not candidates:
        candidates = sc.network.ids()
    best = None
    for lid in candidates:
        try:
            _, d = sc.network[lid].frame.to_curvilinear(point)
        except ProjectionError:
            continue
        if best is None or abs(d) < abs(best):
            best = d
    if best is None:
        raise CostError(f"state {k} cannot be projected onto any lane center")
    return best


def _lane_width_at(sc: Scenario, point) -> float:
    for lid in sc.network.lanelets_containing(point):
        lanelet = sc.network[lid]
        try:
            s, _ = lanelet.frame.to_curvilinear(point)
        except ProjectionError:
            continue
        return lanelet.width_at(s)
    return DEFAULT_LANE_WIDTH


def evaluate_cost(traj: Trajectory, sc: Scenario, frame: CurvilinearFrame,
                  p: VehicleParameters | None = None,
                  w_dist: float = W_DIST_DECAY) -> CostBreakdown:
    """Cost of a feasible trajectory over its whole duration.

    Integrals use the rectangle rule with step dt over the n - 1 trajectory
    steps, so a constant integrand f over duration T contributes exactly f * T.
    """
    from .dynamics import DEFAULT_PARAMETERS

    p = p or DEFAULT_PARAMETERS
    S = traj.states_array()
    dt = traj.dt
    n = len(S)
    if n < 2:
        return CostBreakdown(0.0, 0.0, 0.0, 0.0, 0.0)

    jerk = _longitudinal_jerk(S[:, 3], dt)
    j_jerk = float(np.sum(jerk**2) * dt)

    if traj.inputs:
        v_delta = traj.inputs_array()[:, 0]
    else:
        v_delta = np.diff(S[:, 2]) / dt
    j_sr = float(np.sum(v_delta**2) * dt)

    t0 = sc.problem.initial_time
    j_lc = 0.0
    j_dist = 0.0
    for k in range(n - 1):
        point = S[k, :2]
        d_center = _nearest_center_offset(sc, point, k)
        j_lc += d_center**2 * dt

        if sc.obstacles:
            try:
                s_ego, d_ego = frame.to_curvilinear(point)
            except ProjectionError as exc:
                raise CostError(f"state {k} cannot be projected onto the route frame") from exc
            lane_w = _lane_width_at(sc, point)
            best = 0.0
            for ob in sc.obstacles:
                ox, oy, _, _ = ob.state_at(t0 + k)
                try:
                    s_ob, d_ob = frame.to_curvilinear((ox, oy))
                except ProjectionError:
                    continue
                if s_ob <= s_ego or abs(d_ob - d_ego) >= lane_w:
                    continue
                gap = max(0.0, np.hypot(ox - point[0], oy - point[1])
                          - 0.5 * p.length - 0.5 * ob.length)
                best = max(best, float(np.exp(-w_dist * gap)))
            j_dist += best * dt

    total = W_JERK * j_jerk + W_SR * j_sr + W_DIST * j_dist + W_LC * j_lc
    return CostBreakdown(j_jerk=j_jerk, j_sr=j_sr, j_dist=j_dist, j_lc=j_lc, total=total)
