import itertools
import json

import numpy as np
import pytest

from roadplan import reach
from roadplan.dynamics import DEFAULT_PARAMETERS as P, rollout_batch
from roadplan.errors import PlanningFailure
from roadplan.geometry import ConvexPolygon
from roadplan.scenario import goal_reached, parse_scenario


def straight_doc(goal=None, obstacles=(), length=200.0, width=3.5, v0=10.0, horizon=80):
    goal = goal or {"polygon": [[90.0, -width / 2], [120.0, -width / 2],
                                [120.0, width / 2], [90.0, width / 2]],
                    "v": [0.0, 20.0], "t": [20, 70]}
    return {
        "dt": 0.1, "horizon": horizon,
        "lanelets": [{
            "id": 1,
            "left": [[x, width / 2] for x in np.linspace(0, length, 21)],
            "right": [[x, -width / 2] for x in np.linspace(0, length, 21)],
            "successors": [], "adj_left": None, "adj_right": None, "speed_limit": None,
        }],
        "obstacles": list(obstacles),
        "problem": {
            "initial": {"x": 5.0, "y": 0.0, "delta": 0.0, "v": v0, "psi": 0.0},
            "goal": goal,
        },
    }


def two_lane_doc(goal, obstacles=(), length=220.0):
    return {
        "dt": 0.1, "horizon": 100,
        "lanelets": [
            {"id": 1, "left": [[x, 3.5] for x in np.linspace(0, length, 23)],
             "right": [[x, 0.0] for x in np.linspace(0, length, 23)],
             "successors": [], "adj_left": 2, "adj_right": None, "speed_limit": None},
            {"id": 2, "left": [[x, 7.0] for x in np.linspace(0, length, 23)],
             "right": [[x, 3.5] for x in np.linspace(0, length, 23)],
             "successors": [], "adj_left": None, "adj_right": 1, "speed_limit": None},
        ],
        "obstacles": list(obstacles),
        "problem": {
            "initial": {"x": 5.0, "y": 1.75, "delta": 0.0, "v": 10.0, "psi": 0.0},
            "goal": goal,
        },
    }


# --- reachable set propagation -------------------------------------------------


def test_propagate_point_no_acceleration():
    pv = reach.PVSet.from_point(0.0, 0.0)
    out = reach.propagate(pv, 0.0, 0.1)
    assert np.allclose(out.polygon.vertices, [[0.0, 0.0]])


def test_propagate_point_spreads_to_segment():
    # B * [-2, 2] from a point at rest, then clipped to v >= 0
    out = reach.propagate(reach.PVSet.from_point(0.0, 0.0), 2.0, 0.1)
    verts = out.polygon.vertices[np.lexsort((out.polygon.vertices[:, 1],))]
    assert np.allclose(verts, [[0.0, 0.0], [0.01, 0.2]], atol=1e-12)


def _sample_rollouts(rng, xi0, v0, a_max, dt, steps, n):
    a = rng.uniform(-a_max, a_max, size=(n, steps))
    xi = np.full(n, xi0)
    v = np.full(n, v0)
    states = [(xi.copy(), v.copy())]
    for k in range(steps):
        ak = a[:, k].copy()
        # clamp braking so velocity never goes negative, still admissible
        ak = np.maximum(ak, -v / dt)
        xi = xi + v * dt + 0.5 * ak * dt * dt
        v = v + ak * dt
        states.append((xi.copy(), v.copy()))
    return states


def test_propagate_contains_sampled_rollouts():
    rng = np.random.default_rng(17)
    dt, steps, n = 0.1, 20, 1500
    pv = reach.PVSet.from_point(3.0, 8.0)
    states = _sample_rollouts(rng, 3.0, 8.0, P.a_max, dt, steps, n)
    for k in range(1, steps + 1):
        pv = reach.propagate(pv, P.a_max, dt)
        pts = np.stack(states[k], axis=1)
        assert pv.polygon.contains_points(pts, tol=1e-9).all(), f"escape at step {k}"


# --- pruning --------------------------------------------------------------------


def seg_pv():
    return reach.PVSet(ConvexPolygon([[0.0, 0.0], [0.01, 0.2]]))


def test_prune_speed_limit_noop_below():
    pv = seg_pv()
    assert reach.prune_speed_limit(pv, 1.0) is pv


def test_prune_speed_limit_clips():
    out = reach.prune_speed_limit(seg_pv(), 0.1)
    assert out.v_span()[1] == pytest.approx(0.1)
    assert out.xi_span()[1] == pytest.approx(0.005)


def test_prune_speed_limit_zero_empty():
    assert reach.prune_speed_limit(seg_pv(), 0.0) is None


def test_prune_friction():
    box = reach.PVSet(ConvexPolygon([[0, 0], [10, 0], [10, 30], [0, 30]]))
    out = reach.prune_friction(box, 0.02, 8.0)
    assert out.v_span()[1] == pytest.approx(np.sqrt(8.0 / 0.02))  # 20 m/s
    same = reach.prune_friction(box, 0.0, 8.0)
    assert same is box
    empty = reach.prune_friction(reach.PVSet(ConvexPolygon([[0, 25], [10, 25], [10, 30], [0, 30]])),
                                 0.02, 8.0)
    assert empty is None


def test_prune_outputs_are_subsets():
    rng = np.random.default_rng(3)
    for _ in range(30):
        pts = rng.uniform(0, 30, size=(8, 2))
        from roadplan.geometry import convex_hull

        pv = reach.PVSet(convex_hull(pts))
        for out in (reach.prune_speed_limit(pv, rng.uniform(1, 25)),
                    reach.prune_friction(pv, rng.uniform(0.005, 0.1), 8.0)):
            if out is None:
                continue
            assert pv.polygon.contains_points(out.polygon.vertices, tol=1e-7).all()


# --- free space -----------------------------------------------------------------


def make_lanelet(length=100.0, width=4.0):
    from roadplan.scenario import Lanelet

    xs = np.linspace(0, length, 11)
    return Lanelet(1, [[x, width / 2] for x in xs], [[x, -width / 2] for x in xs])


def make_obstacle(x, y=0.0, length=4.0, width=2.0, oid=7):
    from roadplan.scenario import Obstacle

    return Obstacle(id=oid, length=length, width=width,
                    states=np.array([[x, y, 0.0, 0.0]]))


def big_pv(x_hi=100.0, v_hi=20.0):
    return reach.PVSet(ConvexPolygon([[0, 0], [x_hi, 0], [x_hi, v_hi], [0, v_hi]]))


def test_constrain_no_obstacles_single_piece():
    lanelet = make_lanelet()
    pieces = reach.constrain_free_space(big_pv(150.0), lanelet, [], 0, P)
    assert len(pieces) == 1
    assert pieces[0].xi_span() == pytest.approx((0.0, 100.0))


def test_constrain_splits_around_obstacle():
    lanelet = make_lanelet()
    ob = make_obstacle(45.0)  # box spans [43, 47] longitudinally
    margin = 0.5
    pieces = reach.constrain_free_space(big_pv(), lanelet, [ob], 0, P, margin=margin)
    assert len(pieces) == 2
    pad = 0.5 * P.length + margin
    # independent interval-complement oracle
    lo_expected = 43.0 - pad
    hi_expected = 47.0 + pad
    assert pieces[0].xi_span()[1] == pytest.approx(lo_expected, abs=1e-9)
    assert pieces[1].xi_span()[0] == pytest.approx(hi_expected, abs=1e-9)


def test_constrain_fully_blocked():
    lanelet = make_lanelet(length=10.0)
    ob = make_obstacle(5.0, length=12.0)
    assert reach.constrain_free_space(big_pv(10.0), lanelet, [ob], 0, P) == []


# --- corridor enumeration --------------------------------------------------------


def test_single_straight_lanelet_yields_one_corridor():
    sc = parse_scenario(json.dumps(straight_doc()))
    corridors = reach.enumerate_corridors(sc, P, reach.ReachConfig())
    assert len(corridors) == 1
    assert corridors[0].lane_change_count == 0
    assert corridors[0].terminal_reaches_goal
    assert set(corridors[0].lanelet_sequence) == {1}


def test_two_lanelet_map_matches_exhaustive_enumeration():
    # tiny map, goal is the whole neighbor lanelet, generous windows: the
    # corridor set must equal the brute force over lanelet strings
    doc = two_lane_doc({"lanelets": [2], "v": [0.0, 50.0], "t": [1, 4]}, length=40.0)
    sc = parse_scenario(json.dumps(doc))
    cfg = reach.ReachConfig(blend_steps=0, change_cooldown=1, max_lane_changes=2)
    corridors = reach.enumerate_corridors(sc, P, cfg)
    got = sorted(c.lanelet_sequence for c in corridors)

    def transitions_ok(seq):
        changes = 0
        last_change = 0
        for i in range(1, len(seq)):
            if seq[i] != seq[i - 1]:
                changes += 1
                if changes > 2 or i - last_change < 1:
                    return False
                last_change = i
        return True

    def first_completion(seq):
        for k in range(len(seq)):
            if seq[k] == 2 and 1 <= k <= 4:
                return k
        return None

    expected = []
    for n in range(2, 6):
        for tail in itertools.product((1, 2), repeat=n - 1):
            seq = (1,) + tail
            if not transitions_ok(seq):
                continue
            k = first_completion(seq)
            if k == len(seq) - 1:  # complete exactly at its end, not before
                expected.append(seq)
    assert got == sorted(expected)
    assert len(got) > 0


def test_blocked_dead_end_yields_no_corridor():
    wall = {"id": 9, "length": 4.0, "width": 3.4,
            "states": [{"t": 0, "x": 60.0, "y": 0.0, "psi": 0.0, "v": 0.0}]}
    doc = straight_doc(goal={"polygon": [[90.0, -1.75], [120.0, -1.75],
                                         [120.0, 1.75], [90.0, 1.75]],
                             "v": [0.0, 20.0], "t": [20, 70]}, obstacles=[wall])
    sc = parse_scenario(json.dumps(doc))
    assert reach.enumerate_corridors(sc, P, reach.ReachConfig()) == []
    with pytest.raises(PlanningFailure):
        reach.plan(sc, P, reach.ReachConfig())


# --- corridor selection -----------------------------------------------------------


def test_select_single_candidate():
    sc = parse_scenario(json.dumps(straight_doc()))
    cfg = reach.ReachConfig()
    corridors = reach.enumerate_corridors(sc, P, cfg)
    assert reach.select_corridor(corridors, sc, cfg, P) is corridors[0]


def test_select_prefers_fewer_lane_changes():
    goal = {"lanelets": [1, 2], "v": [0.0, 20.0], "t": [20, 90]}
    sc = parse_scenario(json.dumps(two_lane_doc(goal)))
    cfg = reach.ReachConfig()
    corridors = reach.enumerate_corridors(sc, P, cfg)
    chosen = reach.select_corridor(corridors, sc, cfg, P)
    assert chosen.lane_change_count == min(c.lane_change_count for c in corridors)


def test_select_matches_brute_force_cost():
    # goal spans both lanes, so staying and changing both produce corridors
    goal = {"lanelets": [1, 2], "v": [0.0, 20.0], "t": [20, 90]}
    sc = parse_scenario(json.dumps(two_lane_doc(goal)))
    cfg = reach.ReachConfig()
    corridors = reach.enumerate_corridors(sc, P, cfg)
    assert len(corridors) >= 2
    chosen = reach.select_corridor(corridors, sc, cfg, P)
    costs = [reach.corridor_cost(c, sc, cfg, P) for c in corridors]
    assert reach.corridor_cost(chosen, sc, cfg, P) == pytest.approx(min(costs))


def test_selection_invariant_under_cost_scaling():
    goal = {"lanelets": [1, 2], "v": [0.0, 20.0], "t": [20, 90]}
    sc = parse_scenario(json.dumps(two_lane_doc(goal)))
    cfg = reach.ReachConfig()
    corridors = reach.enumerate_corridors(sc, P, cfg)
    assert len(corridors) >= 2
    costs = np.array([reach.corridor_cost(c, sc, cfg, P) for c in corridors])
    base = int(np.argmin(costs))
    for lam in (0.5, 3.0, 1000.0):
        assert int(np.argmin(lam * costs)) == base


# --- reference extraction ----------------------------------------------------------


def test_trace_points_inside_cells():
    for doc in (straight_doc(),
                two_lane_doc({"polygon": [[110.0, 3.5], [150.0, 3.5],
                                          [150.0, 7.0], [110.0, 7.0]],
                              "v": [0.0, 20.0], "t": [20, 90]})):
        sc = parse_scenario(json.dumps(doc))
        cfg = reach.ReachConfig()
        corridors = reach.enumerate_corridors(sc, P, cfg)
        corridor = reach.select_corridor(corridors, sc, cfg, P)
        trace = reach.extract_pv_trace(corridor, sc, cfg, P)
        for (lid, pv), (xi, v) in zip(corridor.cells, trace):
            assert pv.polygon.contains_point((xi, v), tol=1e-6)


def test_trace_brakes_before_block():
    # same-lane goal ends short of a stopped obstacle with a stop-speed window
    wall = {"id": 9, "length": 4.0, "width": 3.4,
            "states": [{"t": 0, "x": 80.0, "y": 0.0, "psi": 0.0, "v": 0.0}]}
    goal = {"polygon": [[55.0, -1.75], [72.0, -1.75], [72.0, 1.75], [55.0, 1.75]],
            "v": [0.0, 1.5], "t": [20, 78]}
    doc = straight_doc(goal=goal, obstacles=[wall], v0=8.0)
    sc = parse_scenario(json.dumps(doc))
    cfg = reach.ReachConfig()
    corridors = reach.enumerate_corridors(sc, P, cfg)
    assert corridors, "stopping corridor should exist"
    corridor = reach.select_corridor(corridors, sc, cfg, P)
    trace = reach.extract_pv_trace(corridor, sc, cfg, P)
    assert trace[-1][1] <= 1.6  # arrives at near-stop speed
    assert trace[-1][0] < 80.0 - 0.5 * P.length  # and before the block


# --- tracking OCP ------------------------------------------------------------------


def test_ocp_zero_reference_is_optimal():
    from roadplan.dynamics import rollout
    from roadplan.scenario import VehicleState

    x0 = VehicleState(0.0, 0.0, 0.05, 9.0, 0.2)
    states = rollout(x0, np.zeros((20, 2)), 0.1, P)
    ref = reach.ReferenceTrajectory(dt=0.1, points=states[:, :2])
    res = reach.solve_tracking_ocp(ref, x0, P, reach.ReachConfig())
    assert res.objective < 1e-6


def test_ocp_matches_grid_search_on_tiny_horizon():
    from roadplan.scenario import VehicleState

    x0 = VehicleState(0.0, 0.0, 0.0, 5.0, 0.0)
    dt = 0.1
    ref = np.array([[0.0, 0.0], [0.52, 0.01], [1.06, 0.04], [1.64, 0.09]])
    levels_vd = np.linspace(-P.v_delta_max, P.v_delta_max, 9)
    levels_a = np.linspace(-P.a_max, P.a_max, 9)
    grids = np.meshgrid(levels_vd, levels_a, levels_vd, levels_a, levels_vd, levels_a,
                        indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1).reshape(-1, 3, 2)
    q = np.array([1.0, 1.0])
    r = np.array([0.01, 0.01])
    states = rollout_batch(x0, flat, dt, P)
    err = states[:, 1:, :2] - ref[None, 1:, :]
    objs = np.einsum("bij,j->b", err**2, q) + np.einsum("bij,j->b", flat**2, r)
    grid_best = float(objs.min())

    res = reach.solve_tracking_ocp(reach.ReferenceTrajectory(dt=dt, points=ref), x0, P,
                                   reach.ReachConfig())
    assert res.objective <= grid_best * 1.05


def test_ocp_tracks_straight_reference():
    from roadplan.scenario import VehicleState

    x0 = VehicleState(0.0, 0.0, 0.0, 10.0, 0.0)
    n = 30
    ref = np.stack([np.arange(n + 1) * 1.0, np.zeros(n + 1)], axis=1)
    res = reach.solve_tracking_ocp(reach.ReferenceTrajectory(dt=0.1, points=ref), x0, P,
                                   reach.ReachConfig())
    terminal = res.trajectory.states[-1]
    assert np.hypot(terminal.x - ref[-1, 0], terminal.y - ref[-1, 1]) < 0.1


def test_ocp_objective_not_worse_than_zero_rollout():
    from roadplan.scenario import VehicleState

    rng = np.random.default_rng(5)
    x0 = VehicleState(0.0, 0.0, 0.0, 8.0, 0.0)
    pts = np.cumsum(rng.uniform(0.5, 1.2, size=(25, 2)) * [1.0, 0.05], axis=0)
    ref = np.concatenate([[[0.0, 0.0]], pts])
    res = reach.solve_tracking_ocp(reach.ReferenceTrajectory(dt=0.1, points=ref), x0, P,
                                   reach.ReachConfig())
    zero_states = rollout_batch(x0, np.zeros((1, 25, 2)), 0.1, P)[0]
    zero_obj = float(np.sum((zero_states[1:, :2] - ref[1:]) ** 2))
    assert res.objective <= zero_obj + 1e-9


def test_ocp_inputs_within_bounds():
    sc = parse_scenario(json.dumps(straight_doc()))
    traj = reach.plan(sc, P, reach.ReachConfig())
    u = traj.inputs_array()
    assert np.all(np.abs(u[:, 0]) <= P.v_delta_max + 1e-9)
    assert np.all(np.abs(u[:, 1]) <= P.a_max + 1e-9)


# --- full pipeline -------------------------------------------------------------------


def test_plan_straight_road():
    sc = parse_scenario(json.dumps(straight_doc()))
    traj = reach.plan(sc, P, reach.ReachConfig())
    assert any(goal_reached(s, k, sc.problem.goal, sc.network)
               for k, s in enumerate(traj.states))


def test_plan_changes_lane_past_slow_leader():
    lead = {"id": 5, "length": 4.3, "width": 1.8,
            "states": [{"t": k, "x": 40.0 + 0.4 * k, "y": 1.75, "psi": 0.0, "v": 4.0}
                       for k in range(101)]}
    goal = {"polygon": [[120.0, 0.0], [170.0, 0.0], [170.0, 7.0], [120.0, 7.0]],
            "v": [0.0, 20.0], "t": [20, 95]}
    sc = parse_scenario(json.dumps(two_lane_doc(goal, [lead])))
    traj = reach.plan(sc, P, reach.ReachConfig())
    lanes = set()
    for s in traj.states:
        lanes.update(sc.network.lanelets_containing((s.x, s.y)))
    assert 2 in lanes  # used the free lane at least once


def test_plan_output_is_deterministic():
    doc = json.dumps(straight_doc())
    a = reach.plan(parse_scenario(doc), P, reach.ReachConfig())
    b = reach.plan(parse_scenario(doc), P, reach.ReachConfig())
    assert json.dumps(a.to_solution_dict("s", "reach")) == json.dumps(
        b.to_solution_dict("s", "reach"))
