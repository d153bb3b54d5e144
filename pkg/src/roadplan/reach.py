"""Reachability-based driving-corridor planner with a tracking control stage.

Decision making runs on a longitudinal double integrator per lanelet: the
reachable set in (position, velocity) space is a convex polygon propagated by

    next = A * set + B * [-a_max, a_max],   A = [[1, dt], [0, 1]], B = [dt^2/2, dt]

and constrained by the free space each step. Corridors branch into successor
and same-direction adjacent lanelets, are pruned by speed limits and a
friction-circle velocity cap, and the best goal-reaching corridor (fewest
lane changes, closest to the desired velocity) yields a reference line that a
projected-gradient shooting solver tracks with the nonlinear single-track
model under box input limits.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .curvilinear import ProjectionError
from .drivability import check_drivability
from .dynamics import Trajectory, VehicleParameters, rollout, rollout_batch
from .errors import PlanningFailure, TimeoutExceeded
from .geometry import (
    ConvexPolygon,
    GeometryError,
    affine_transform,
    clip_halfplane,
    minkowski_segment,
)
from .scenario import Scenario, goal_reached


@dataclass(frozen=True)
class ReachConfig:
    v_desired: float = 12.0
    c_lc: float = 5.0
    safety_margin: float = 0.5
    max_corridors: int = 64
    max_active: int = 256
    max_expansions: int = 20000
    max_lane_changes: int = 2
    change_cooldown: int = 15  # steps between two lane changes of one corridor
    ref_accel: float = 3.0
    safe_brake: float = 6.0  # deceleration assumed available ahead of a block
    blend_steps: int = 15  # half-width of a lane-change blend, in steps
    ocp_max_iter: int = 150
    ocp_tol: float = 1e-9
    q_diag: tuple[float, float] = (1.0, 1.0)
    r_diag: tuple[float, float] = (0.01, 0.01)
    replan_stride: int = 15  # used by the harness in reactive mode

    @classmethod
    def from_dict(cls, data: dict) -> "ReachConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        ocp = data.get("ocp", {})
        for key, attr in (("max_iter", "ocp_max_iter"), ("tol", "ocp_tol"),
                          ("q_diag", "q_diag"), ("r_diag", "r_diag")):
            if key in ocp:
                known[attr] = ocp[key]
        for tup in ("q_diag", "r_diag"):
            if tup in known:
                known[tup] = tuple(known[tup])
        return replace(cls(), **known)


def _deadline_check(deadline: float | None):
    if deadline is not None and time.perf_counter() > deadline:
        raise TimeoutExceeded("planner budget exhausted")


# ---------------------------------------------------------------------------
# reachable sets in (longitudinal position, velocity) space


@dataclass(frozen=True)
class PVSet:
    """Convex set of attainable (longitudinal position, velocity) pairs."""

    polygon: ConvexPolygon

    @classmethod
    def from_point(cls, xi: float, v: float) -> "PVSet":
        return cls(ConvexPolygon([[xi, v]]))

    def xi_span(self) -> tuple[float, float]:
        lo, hi = self.polygon.bounds()
        return float(lo[0]), float(hi[0])

    def v_span(self) -> tuple[float, float]:
        lo, hi = self.polygon.bounds()
        return float(lo[1]), float(hi[1])

    def v_mid(self) -> float:
        lo, hi = self.v_span()
        return 0.5 * (lo + hi)

    def shift(self, dxi: float) -> "PVSet":
        return PVSet(self.polygon.translate([dxi, 0.0]))

    def clip(self, normal, offset) -> "PVSet | None":
        poly = clip_halfplane(self.polygon, np.asarray(normal, dtype=float), offset)
        if poly is None:
            return None
        return self if poly is self.polygon else PVSet(poly)


_APPROX_DIRS = np.stack(
    [np.cos(np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)),
     np.sin(np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False))], axis=1
)


def _outer_approx(poly: ConvexPolygon, max_verts: int = 20) -> ConvexPolygon:
    # bound vertex growth with a sound over-approximation: the intersection of
    # supporting halfplanes in fixed directions always contains the polygon
    if len(poly) <= max_verts:
        return poly
    lo, hi = poly.bounds()
    out = ConvexPolygon([[lo[0] - 1.0, lo[1] - 1.0], [hi[0] + 1.0, lo[1] - 1.0],
                         [hi[0] + 1.0, hi[1] + 1.0], [lo[0] - 1.0, hi[1] + 1.0]])
    offsets = (poly.vertices @ _APPROX_DIRS.T).max(axis=0)
    for direction, offset in zip(_APPROX_DIRS, offsets):
        clipped = clip_halfplane(out, direction, float(offset))
        if clipped is None:
            return poly
        out = clipped
    return out


def propagate(pv: PVSet, a_max: float, dt: float) -> PVSet:
    """One forward step of the double-integrator recursion, clipped to v >= 0."""
    moved = affine_transform(pv.polygon, np.array([[1.0, dt], [0.0, 1.0]]))
    spread = minkowski_segment(moved, np.array([0.5 * dt * dt, dt]), a_max)
    clipped = clip_halfplane(spread, np.array([0.0, -1.0]), 0.0)
    if clipped is None:
        raise PlanningFailure("reachable set collapsed below v = 0")
    return PVSet(_outer_approx(clipped))


def prune_speed_limit(pv: PVSet, limit: float) -> PVSet | None:
    """Intersection with v <= limit."""
    if limit <= 0:
        return None
    return pv.clip([0.0, 1.0], limit)


def prune_friction(pv: PVSet, kappa_max: float, a_max: float) -> PVSet | None:
    """Cap velocity so the lateral acceleration v^2 * kappa stays inside a_max."""
    if kappa_max <= 1e-12:
        return pv
    return pv.clip([0.0, 1.0], float(np.sqrt(a_max / kappa_max)))


def _obstacle_xi_intervals(lanelet, obstacles, k: int, p: VehicleParameters,
                           margin: float) -> list[tuple[float, float]]:
    # project obstacle boxes onto the lanelet axis; anything overlapping the
    # lanelet laterally blocks a longitudinal interval
    frame = lanelet.frame
    half_w = 0.5 * lanelet.width_at(0.0)
    lo_b, hi_b = lanelet.ring.min(axis=0) - 25.0, lanelet.ring.max(axis=0) + 25.0
    intervals = []
    for ob in obstacles:
        x, y, psi, _ = ob.state_at(k)
        if not (lo_b[0] <= x <= hi_b[0] and lo_b[1] <= y <= hi_b[1]):
            continue
        c, s = np.cos(psi), np.sin(psi)
        hl, hw = 0.5 * ob.length, 0.5 * ob.width
        corners = np.array([[x + c * dx - s * dy, y + s * dx + c * dy]
                            for dx in (-hl, hl) for dy in (-hw, hw)])
        s_vals, d_vals = [], []
        for corner in corners:
            try:
                cs, cd = frame.to_curvilinear(corner)
            except ProjectionError:
                continue
            s_vals.append(cs)
            d_vals.append(cd)
        if not s_vals:
            continue
        if max(d_vals) < -half_w or min(d_vals) > half_w:
            continue  # not on this lanelet
        pad = 0.5 * p.length + margin
        intervals.append((min(s_vals) - pad, max(s_vals) + pad))
    return intervals


def _brake_clip(piece: PVSet, block: float, a_brake: float) -> PVSet | None:
    # remove states that cannot stop before the block: keep v below the chord
    # of the braking parabola v = sqrt(2 a (block - xi)), which is a sound
    # (conservative) linear cut since the parabola is concave
    x_lo, x_hi = piece.xi_span()
    gap = block - x_lo
    if gap <= 0.0:
        return piece.clip([0.0, 1.0], 0.0)
    v_safe = np.sqrt(2.0 * a_brake * gap)
    slope = -v_safe / gap
    # halfplane v <= v_safe + slope * (xi - x_lo)
    return piece.clip([-slope, 1.0], v_safe - slope * x_lo)


def _split_by_intervals(pv: PVSet, length: float,
                        intervals: list[tuple[float, float]],
                        safe_brake: float | None = None) -> list[PVSet]:
    piece = pv.clip([-1.0, 0.0], 0.0)
    if piece is not None:
        piece = piece.clip([1.0, 0.0], length)
    if piece is None:
        return []
    pieces = [piece]
    for lo, hi in intervals:
        nxt: list[PVSet] = []
        for pc in pieces:
            before = pc.clip([1.0, 0.0], lo)
            if before is not None and safe_brake is not None:
                before = _brake_clip(before, lo, safe_brake)
            after = pc.clip([-1.0, 0.0], -hi)
            nxt.extend(x for x in (before, after) if x is not None)
        pieces = nxt
        if not pieces:
            break
    pieces.sort(key=lambda pc: pc.xi_span()[0])
    return pieces


def constrain_free_space(pv: PVSet, lanelet, obstacles, k: int, p: VehicleParameters,
                         margin: float = 0.5) -> list[PVSet]:
    """Clip to the lanelet extent and subtract blocked longitudinal intervals.

    Returns the maximal convex pieces of the remaining set, ordered by
    increasing position; an empty list means the step is fully blocked.
    """
    return _split_by_intervals(
        pv, lanelet.length, _obstacle_xi_intervals(lanelet, obstacles, k, p, margin)
    )


# ---------------------------------------------------------------------------
# corridor enumeration


@dataclass(eq=False)
class DrivingCorridor:
    cells: tuple[tuple[int, PVSet], ...]
    lane_change_count: int
    terminal_reaches_goal: bool
    id: int = -1

    @property
    def lanelet_sequence(self) -> tuple[int, ...]:
        return tuple(lid for lid, _ in self.cells)

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class ReferenceTrajectory:
    dt: float
    points: np.ndarray  # (n + 1, 2)

    def __len__(self) -> int:
        return len(self.points)


def _goal_xi_intervals(sc: Scenario) -> dict[int, tuple[float, float]]:
    cached = getattr(sc, "_goal_xi_cache", None)
    if cached is None:
        from .route import goal_centerline_intervals

        cached = goal_centerline_intervals(sc.network, sc.problem.goal)
        sc._goal_xi_cache = cached
    return cached


def _cell_velocity_cap(lanelet, p: VehicleParameters) -> float:
    cap = p.v_max
    if lanelet.speed_limit is not None:
        cap = min(cap, lanelet.speed_limit)
    kappa = float(np.max(np.abs(lanelet.frame.curvature)))
    if kappa > 1e-12:
        cap = min(cap, float(np.sqrt(p.a_max / kappa)))
    return cap


def enumerate_corridors(sc: Scenario, p: VehicleParameters,
                        cfg: ReachConfig | None = None,
                        deadline: float | None = None) -> list[DrivingCorridor]:
    """Breadth-first corridor search over (time step, lanelet) cells.

    A corridor completes the first time its cell overlaps the goal's position
    interval with an admissible velocity inside the goal time window. The
    returned list holds only goal-reaching corridors, in discovery order.
    """
    cfg = cfg or ReachConfig()
    net = sc.network
    goal = sc.problem.goal
    goal_xi = _goal_xi_intervals(sc)
    t_lo, t_hi = goal.t_interval
    t_hi = min(t_hi, sc.horizon)

    init = sc.problem.initial_state
    start_ids = net.lanelets_containing(init.position())
    if not start_ids:
        raise PlanningFailure("initial state is not on any lanelet")

    def overlaps_goal(lid: int, pv: PVSet, k: int) -> bool:
        if not (t_lo <= k <= t_hi) or lid not in goal_xi:
            return False
        g_lo, g_hi = goal_xi[lid]
        x_lo, x_hi = pv.xi_span()
        v_lo, v_hi = pv.v_span()
        return x_hi >= g_lo and x_lo <= g_hi and v_hi >= goal.v_interval[0] and v_lo <= goal.v_interval[1]

    blocked_cache: dict[tuple[int, int], list[tuple[float, float]]] = {}

    def blocked(lid: int, k: int) -> list[tuple[float, float]]:
        key = (lid, k)
        if key not in blocked_cache:
            blocked_cache[key] = _obstacle_xi_intervals(
                net[lid], sc.obstacles, k, p, cfg.safety_margin
            )
        return blocked_cache[key]

    # corridors never plan beyond a policy speed: reachability at full engine
    # authority would dominate every set and make the velocity costs useless
    v_policy = max(1.25 * cfg.v_desired, init.v + 1.0,
                   sc.problem.goal.v_interval[0] + 1.0)

    def enter(pv: PVSet, lid: int, k: int) -> list[PVSet]:
        capped = prune_speed_limit(pv, min(_cell_velocity_cap(net[lid], p), v_policy))
        if capped is None:
            return []
        return _split_by_intervals(capped, net[lid].length, blocked(lid, k),
                                   safe_brake=cfg.safe_brake)

    # cheapest possible arrival step: straight-line distance at cruise speed;
    # cheaper than running the full trace gate below it
    anchor = (goal.polygon.centroid() if goal.polygon is not None
              else net[sorted(goal.lanelet_ids)[0]].center.mean(axis=0))
    crow = float(np.hypot(*(anchor - init.position())))
    span = max(gh - gl for gl, gh in goal_xi.values()) if goal_xi else 0.0
    cruise = max(cfg.v_desired, init.v, 1.0)
    k_min_arrival = max(0, int((crow - 0.5 * span - 5.0) / (cruise * sc.dt)))

    def completes(cells: tuple, changes: int, last_change: int) -> bool:
        # the reachable set touching the goal is necessary; the branch only
        # completes once a comfortable velocity trace arrives safely inside
        # and the last lane change has had time to settle laterally
        lid, pv = cells[-1]
        k = len(cells) - 1
        if k < k_min_arrival or not overlaps_goal(lid, pv, k):
            return False
        if k - last_change < cfg.blend_steps:
            return False
        candidate = DrivingCorridor(cells, changes, True)
        trace = extract_pv_trace(candidate, sc, cfg, p, steer_terminal=False)
        xi_t, v_t = trace[-1]
        g_lo, g_hi = goal_xi[lid]
        inset = min(1.0, 0.25 * (g_hi - g_lo))
        return (g_lo + inset <= xi_t <= g_hi - inset
                and goal.v_interval[0] - 0.5 <= v_t <= goal.v_interval[1] + 0.5)

    completed: list[DrivingCorridor] = []
    queue: deque[tuple[tuple[tuple[int, PVSet], ...], int, int]] = deque()
    for lid in sorted(start_ids):
        s0, _ = net[lid].frame.to_curvilinear(init.position())
        pv0 = PVSet.from_point(s0, init.v)
        cell = (lid, pv0)
        # the start counts as a fresh change: the first lane change must wait
        # out the cooldown so the lateral blend has room
        if completes((cell,), 0, 0):
            completed.append(DrivingCorridor((cell,), 0, True, id=len(completed)))
        else:
            queue.append(((cell,), 0, 0))

    # branches reaching the same lanelet at the same step with the same change
    # count and (coarsely) the same set are interchangeable; among twins the
    # one whose last lane change is oldest wins, since it completes soonest
    seen: dict[tuple, int] = {}
    consumed: set[tuple] = set()

    def state_key(lid: int, pv: PVSet, k: int, changes: int) -> tuple:
        x_lo, x_hi = pv.xi_span()
        v_lo, v_hi = pv.v_span()
        return (k, lid, changes, round(x_lo), round(x_hi), round(v_lo), round(v_hi))

    expansions = 0
    while queue and len(completed) < cfg.max_corridors and expansions < cfg.max_expansions:
        _deadline_check(deadline)
        cells, changes, last_change = queue.popleft()
        lid, pv = cells[-1]
        k = len(cells) - 1
        key = state_key(lid, pv, k, changes)
        if key in consumed or seen.get(key, last_change) != last_change:
            continue  # a more settled twin exists or was already expanded
        consumed.add(key)
        if k >= t_hi:
            continue
        expansions += 1
        lanelet = net[lid]
        moved = propagate(pv, p.a_max, sc.dt)

        children: list[tuple[int, PVSet, int, int]] = []
        for piece in enter(moved, lid, k + 1):
            children.append((lid, piece, changes, last_change))
        overflow = moved.clip([-1.0, 0.0], -lanelet.length)
        if overflow is not None:
            for succ in sorted(lanelet.successors):
                shifted = overflow.shift(-lanelet.length)
                for piece in enter(shifted, succ, k + 1):
                    children.append((succ, piece, changes, last_change))
        may_change = (changes < cfg.max_lane_changes
                      and k + 1 - last_change >= cfg.change_cooldown)
        if may_change:
            for adj in (lanelet.adj_left, lanelet.adj_right):
                if adj is None:
                    continue
                for piece in enter(moved, adj, k + 1):
                    children.append((adj, piece, changes + 1, k + 1))

        for child_lid, child_pv, child_changes, child_last in children:
            new_cells = cells + ((child_lid, child_pv),)
            if completes(new_cells, child_changes, child_last):
                completed.append(
                    DrivingCorridor(new_cells, child_changes, True, id=len(completed))
                )
                if len(completed) >= cfg.max_corridors:
                    break
            elif k + 1 < t_hi and len(queue) < cfg.max_active:
                key = state_key(child_lid, child_pv, k + 1, child_changes)
                if key not in consumed and child_last < seen.get(key, child_last + 1):
                    seen[key] = child_last
                    queue.append((new_cells, child_changes, child_last))

    return completed


def corridor_cost(corridor: DrivingCorridor, sc: Scenario, cfg: ReachConfig,
                  p: VehicleParameters) -> float:
    """Lane changes plus the integrated gap to the desired velocity profile."""
    cost = cfg.c_lc * corridor.lane_change_count
    for lid, pv in corridor.cells:
        limit = sc.network[lid].speed_limit
        v_des = cfg.v_desired if limit is None else min(cfg.v_desired, limit)
        cost += abs(pv.v_mid() - v_des) * sc.dt
    return cost


def select_corridor(corridors: list[DrivingCorridor], sc: Scenario,
                    cfg: ReachConfig, p: VehicleParameters) -> DrivingCorridor:
    """Cheapest goal-reaching corridor; ties prefer fewer lane changes."""
    if not corridors:
        raise PlanningFailure("no corridor reaches the goal")
    return min(
        corridors,
        key=lambda c: (round(corridor_cost(c, sc, cfg, p), 12), c.lane_change_count, c.id),
    )


# ---------------------------------------------------------------------------
# reference extraction


def _project_into(pv: PVSet, xi: float, v: float) -> tuple[float, float]:
    pt = pv.polygon.closest_point(np.array([xi, v]))
    return float(pt[0]), float(pt[1])


def _rebase_offsets(corridor: DrivingCorridor, sc: Scenario) -> np.ndarray:
    # xi drops by the predecessor length across successor hops
    cells = corridor.cells
    rebase = np.zeros(len(cells))
    for i in range(1, len(cells)):
        prev_lid, cur_lid = cells[i - 1][0], cells[i][0]
        if cur_lid != prev_lid and cur_lid in sc.network[prev_lid].successors:
            rebase[i] = sc.network[prev_lid].length
    return rebase


def _profile_accel(v: float, cfg: ReachConfig, p: VehicleParameters) -> float:
    # stay below both the comfort level and 90 % of the engine power limit
    cap = p.a_max if not p.power_limit else p.a_max * min(1.0, p.v_switch / max(v, 1e-6))
    return min(cfg.ref_accel, 0.9 * cap)


def _velocity_profile(v0: float, v_goal: float, caps: np.ndarray, target: float,
                      dt: float, cfg: ReachConfig, p: VehicleParameters) -> np.ndarray:
    """Velocity sequence covering `target` meters in len(caps) - 1 steps.

    Forward pass limited by acceleration and a cruise ceiling, backward pass
    limited by braking into the terminal speed; the cruise ceiling is found by
    bisection so the integrated distance matches the target.
    """
    n = len(caps) - 1
    a_brake = 0.8 * p.a_max

    def build(cruise: float) -> tuple[np.ndarray, float]:
        v = np.empty(n + 1)
        v[0] = v0
        for k in range(n):
            ceil = min(cruise, caps[k + 1])
            if v[k] < ceil:
                v[k + 1] = min(v[k] + _profile_accel(v[k], cfg, p) * dt, ceil)
            else:
                v[k + 1] = max(v[k] - a_brake * dt, ceil)
            v[k + 1] = max(v[k + 1], 0.0)
        v[n] = min(v[n], max(v_goal, 0.0))
        for k in range(n - 1, 0, -1):
            v[k] = min(v[k], v[k + 1] + a_brake * dt)
        dist = float(np.sum(0.5 * (v[:-1] + v[1:])) * dt)
        return v, dist

    # the cruise ceiling never exceeds the desired speed (or the initial speed
    # when already faster); the reachable sets alone would allow far more
    lo = 0.0
    hi = float(max(v_goal, min(caps.max(), max(cfg.v_desired, v0))) + 1.0)
    v, dist = build(hi)
    if dist <= target:
        return v  # best effort, cannot cover more
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        v, dist = build(mid)
        if dist < target:
            lo = mid
        else:
            hi = mid
    return build(hi)[0]


def _goal_arrival(corridor: DrivingCorridor, sc: Scenario, cfg: ReachConfig,
                  p: VehicleParameters) -> tuple[float, float, float]:
    """(start xi, target distance, terminal speed) for the corridor's goal."""
    cells = corridor.cells
    rebase = _rebase_offsets(corridor, sc)
    xi0 = float(cells[0][1].polygon.centroid()[0])
    last_lid, last_pv = cells[-1]
    goal_xi = _goal_xi_intervals(sc).get(last_lid)
    x_lo, x_hi = last_pv.xi_span()
    if goal_xi is not None:
        x_lo, x_hi = max(x_lo, goal_xi[0]), min(x_hi, goal_xi[1])
        if x_lo > x_hi:
            x_lo, x_hi = goal_xi
    target = 0.5 * (x_lo + x_hi) + float(np.sum(rebase)) - xi0
    g_lo, g_hi = sc.problem.goal.v_interval
    v_goal = float(np.clip(cfg.v_desired, g_lo, min(g_hi, p.v_max)))
    return xi0, max(target, 0.0), v_goal


def extract_pv_trace(corridor: DrivingCorridor, sc: Scenario, cfg: ReachConfig,
                     p: VehicleParameters,
                     steer_terminal: bool = True) -> list[tuple[float, float]]:
    """(position, velocity) choice inside every cell along the corridor."""
    cells = corridor.cells
    n = len(cells)
    dt = sc.dt
    rebase = _rebase_offsets(corridor, sc)
    xi0, target, v_goal = _goal_arrival(corridor, sc, cfg, p)
    v0 = float(cells[0][1].polygon.centroid()[1])
    caps = np.array([min(pv.v_span()[1], _cell_velocity_cap(sc.network[lid], p))
                     for lid, pv in cells])
    v = _velocity_profile(v0, v_goal, caps, target, dt, cfg, p)
    xi_chain = xi0 + np.concatenate([[0.0], np.cumsum(0.5 * (v[:-1] + v[1:]) * dt)])
    xi_local = xi_chain - np.cumsum(rebase)

    trace: list[tuple[float, float]] = []
    for i in range(n):
        trace.append(_project_into(cells[i][1], float(xi_local[i]), float(v[i])))
    if not steer_terminal:
        return trace

    # steer the terminal point to sit safely inside the goal window
    goal = sc.problem.goal
    last_lid, last_pv = cells[-1]
    goal_xi = _goal_xi_intervals(sc).get(last_lid)
    tgt = last_pv
    xi_t, v_t = trace[-1]
    if goal_xi is not None:
        g_lo, g_hi = goal_xi
        inset = min(1.0, 0.25 * (g_hi - g_lo))
        xi_t = float(np.clip(xi_t, g_lo + inset, g_hi - inset))
        for normal, offset in (([1.0, 0.0], g_hi), ([-1.0, 0.0], -g_lo),
                               ([0.0, 1.0], goal.v_interval[1]),
                               ([0.0, -1.0], -goal.v_interval[0])):
            clipped = tgt.clip(normal, offset)
            if clipped is None:
                break
            tgt = clipped
    trace[-1] = _project_into(tgt, xi_t, v_t)
    return trace


def extract_reference(corridor: DrivingCorridor, sc: Scenario, cfg: ReachConfig,
                      p: VehicleParameters) -> tuple[ReferenceTrajectory, list[tuple[float, float]]]:
    """Cartesian reference points along the corridor, blended over lane changes."""
    net = sc.network
    trace = extract_pv_trace(corridor, sc, cfg, p)
    cells = corridor.cells
    n = len(cells)
    points = np.zeros((n, 2))
    for i in range(n):
        lid = cells[i][0]
        frame = net[lid].frame
        xi = float(np.clip(trace[i][0], 0.0, frame.length))
        points[i] = frame.to_cartesian(xi, 0.0)

    # smooth the lateral jump across each adjacency hop
    for m in range(1, n):
        prev_lid, cur_lid = cells[m - 1][0], cells[m][0]
        if cur_lid == prev_lid or cur_lid in net[prev_lid].successors:
            continue
        w = cfg.blend_steps
        frame_prev = net[prev_lid].frame
        frame_cur = net[cur_lid].frame
        for i in range(max(0, m - w), min(n, m + w)):
            sigma = (i - (m - w)) / (2.0 * w)
            sigma = sigma * sigma * (3.0 - 2.0 * sigma)
            try:
                if i < m:
                    base = points[i]
                    s_t, _ = frame_cur.to_curvilinear(base)
                    other = frame_cur.to_cartesian(float(np.clip(s_t, 0, frame_cur.length)), 0.0)
                    points[i] = (1.0 - sigma) * base + sigma * other
                else:
                    base = points[i]
                    s_t, _ = frame_prev.to_curvilinear(base)
                    other = frame_prev.to_cartesian(float(np.clip(s_t, 0, frame_prev.length)), 0.0)
                    points[i] = sigma * base + (1.0 - sigma) * other
            except ProjectionError:
                continue

    # smooth the geometry to take the kinks out of the blend boundaries, then
    # re-sample the smoothed curve on the original arc-length schedule so the
    # velocity profile encoded in the point spacing survives untouched
    if len(points) >= 7:
        kernel = np.ones(5) / 5.0
        padded = np.concatenate([points[:1].repeat(2, axis=0), points,
                                 points[-1:].repeat(2, axis=0)])
        curve = np.stack(
            [np.convolve(padded[:, 0], kernel, "valid"),
             np.convolve(padded[:, 1], kernel, "valid")], axis=1
        )
        curve[0] = points[0]
        schedule = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(points, axis=0).T))])
        try:
            from .curvilinear import CurvilinearFrame

            frame = CurvilinearFrame(curve)
            points = frame.to_cartesian_many(
                np.clip(schedule, 0.0, frame.length), np.zeros(len(schedule))
            )
        except GeometryError:
            pass
    return ReferenceTrajectory(dt=sc.dt, points=points), trace


# ---------------------------------------------------------------------------
# tracking optimal control


class OcpError(RuntimeError):
    pass


@dataclass(eq=False)
class OcpResult:
    trajectory: Trajectory
    objective: float
    converged: bool
    iterations: int


def _reference_seeded_inputs(z_ref: np.ndarray, x0, dt: float, p: VehicleParameters,
                             v_ref: np.ndarray | None = None) -> np.ndarray:
    from .dynamics import tracking_controller_inputs

    return tracking_controller_inputs(z_ref, x0, dt, p, v_ref=v_ref)


def solve_tracking_ocp(z_ref: ReferenceTrajectory | np.ndarray, x0, p: VehicleParameters,
                       cfg: ReachConfig | None = None, n_steps: int | None = None,
                       v_hint: np.ndarray | None = None,
                       deadline: float | None = None) -> OcpResult:
    """Track the reference with the single-track model under box input limits.

    Projected-gradient single shooting: gradients by forward finite
    differences over a batched rollout, a backtracking line search, and
    projection onto the input box each step. The returned trajectory is the
    rollout of the optimized inputs, so the dynamics hold by construction and
    the objective never exceeds the zero-input rollout's.
    """
    cfg = cfg or ReachConfig()
    if isinstance(z_ref, ReferenceTrajectory):
        ref = np.asarray(z_ref.points, dtype=float)
        dt = z_ref.dt
    else:
        ref = np.asarray(z_ref, dtype=float)
        dt = 0.1
    n = len(ref) - 1
    if n_steps is not None and n_steps != n:
        raise OcpError(f"reference has {n} steps, expected {n_steps}")
    if n < 1:
        raise OcpError("reference needs at least two points")
    if not np.all(np.isfinite(ref)) or not np.all(np.isfinite(x0.to_array())):
        raise OcpError("non-finite reference or initial state")

    q = np.asarray(cfg.q_diag, dtype=float)
    r = np.asarray(cfg.r_diag, dtype=float)
    box = np.array([p.v_delta_max, p.a_max])

    def objective(u_batch: np.ndarray) -> np.ndarray:
        states = rollout_batch(x0, u_batch, dt, p)
        err = states[:, 1:, :2] - ref[None, 1:, :]
        track = np.einsum("bij,j->b", err**2, q)
        effort = np.einsum("bij,j->b", u_batch**2, r)
        return track + effort

    def value(u: np.ndarray) -> float:
        val = float(objective(u[None])[0])
        if not np.isfinite(val):
            raise OcpError("objective is not finite")
        return val

    starts = [np.zeros((n, 2)),
              np.clip(_reference_seeded_inputs(ref, x0, dt, p, v_ref=v_hint), -box, box)]
    vals = [value(s) for s in starts]
    u = starts[int(np.argmin(vals))].copy()
    best_val = min(vals)

    h = 1e-5
    alpha = 1.0
    iterations = 0
    converged = False
    stall = 0
    eye = np.eye(2 * n).reshape(2 * n, n, 2)
    for iterations in range(1, cfg.ocp_max_iter + 1):
        _deadline_check(deadline)
        batch = np.concatenate([u[None], u[None] + h * eye], axis=0)
        vals_b = objective(batch)
        f0 = float(vals_b[0])
        grad = ((vals_b[1:] - f0) / h).reshape(n, 2)

        improved = False
        for _ in range(30):
            cand = np.clip(u - alpha * grad, -box, box)
            step = cand - u
            step_sq = float(np.sum(step**2))
            if step_sq < 1e-20:
                break
            f_new = value(cand)
            if f_new <= f0 - 1e-4 * step_sq / max(alpha, 1e-12):
                u = cand
                best_val = min(best_val, f_new)
                alpha = min(alpha * 1.3, 1e3)
                improved = True
                break
            alpha *= 0.5
        if not improved:
            converged = True
            break
        if abs(f0 - best_val) <= cfg.ocp_tol * max(1.0, abs(f0)):
            stall += 1
            if stall >= 3:
                converged = True
                break
        else:
            stall = 0

    final_val = value(u)
    states = rollout(x0, u, dt, p)
    traj = Trajectory.from_arrays(dt, states, u)
    return OcpResult(trajectory=traj, objective=final_val, converged=converged,
                     iterations=iterations)


# ---------------------------------------------------------------------------
# full pipeline


def plan(sc: Scenario, p: VehicleParameters, cfg: ReachConfig | None = None,
         deadline: float | None = None) -> Trajectory:
    """Corridor enumeration, selection, reference extraction and tracking."""
    cfg = cfg or ReachConfig()
    corridors = enumerate_corridors(sc, p, cfg, deadline)
    if not corridors:
        raise PlanningFailure("no corridor reaches the goal")
    corridor = select_corridor(corridors, sc, cfg, p)
    reference, trace = extract_reference(corridor, sc, cfg, p)
    result = solve_tracking_ocp(reference, sc.problem.initial_state, p, cfg,
                                v_hint=np.array([v for _, v in trace]),
                                deadline=deadline)
    traj = result.trajectory

    report = check_drivability(traj, sc, p)
    if not report.feasible:
        raise PlanningFailure(
            f"tracked trajectory violates {report.first_violation[0]}",
            step=report.first_violation[1],
        )
    t0 = sc.problem.initial_time
    if not any(goal_reached(s, t0 + k, sc.problem.goal, sc.network)
               for k, s in enumerate(traj.states)):
        raise PlanningFailure("tracked trajectory misses the goal window")
    return traj
