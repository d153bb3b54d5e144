"""Synthetic benchmark corpus.

Builds a deterministic set of scenario documents spanning straight roads,
curves, lane changes, leading vehicles, merges, speed limits, stop goals and
one deliberately impossible problem. Scenario names starting with `basic_`
form the subset both planners are expected to solve.

Regenerate the bundled files with:  python3 -m roadplan.corpus <output-dir>
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np


def _straight_lane(lid, x0, x1, y_center, width, spacing=10.0, successors=(),
                   adj_left=None, adj_right=None, speed_limit=None):
    n = max(2, int(round((x1 - x0) / spacing)) + 1)
    xs = np.linspace(x0, x1, n)
    return {
        "id": lid,
        "left": [[float(x), float(y_center + width / 2)] for x in xs],
        "right": [[float(x), float(y_center - width / 2)] for x in xs],
        "successors": list(successors),
        "adj_left": adj_left,
        "adj_right": adj_right,
        "speed_limit": speed_limit,
    }


def _arc_lane(lid, cx, cy, radius, ang0, ang1, width, step_deg=2.0, successors=(),
              speed_limit=None):
    """Curved lane along a circular arc; positive sweep turns left (CCW)."""
    n = max(3, int(abs(ang1 - ang0) / np.radians(step_deg)) + 1)
    ang = np.linspace(ang0, ang1, n)
    ccw = ang1 > ang0
    r_left = radius - width / 2 if ccw else radius + width / 2
    r_right = radius + width / 2 if ccw else radius - width / 2
    left = [[float(cx + r_left * np.cos(a)), float(cy + r_left * np.sin(a))] for a in ang]
    right = [[float(cx + r_right * np.cos(a)), float(cy + r_right * np.sin(a))] for a in ang]
    return {
        "id": lid, "left": left, "right": right,
        "successors": list(successors), "adj_left": None, "adj_right": None,
        "speed_limit": speed_limit,
    }


def _arc_pose(cx, cy, radius, ang, ccw=True):
    x = float(cx + radius * np.cos(ang))
    y = float(cy + radius * np.sin(ang))
    psi = float(ang + np.pi / 2) if ccw else float(ang - np.pi / 2)
    return x, y, psi


def _moving_obstacle(oid, x0, y, v, n_steps, length=4.3, width=1.8, accel=0.0):
    states = []
    x, vel = x0, v
    for k in range(n_steps + 1):
        states.append({"t": k, "x": float(x), "y": float(y), "psi": 0.0, "v": float(vel)})
        x += vel * 0.1 + 0.5 * accel * 0.01
        vel = max(vel + accel * 0.1, 0.0)
    return {"id": oid, "length": length, "width": width, "states": states}


def _static_obstacle(oid, x, y, psi=0.0, length=4.3, width=1.8):
    return {"id": oid, "length": length, "width": width,
            "states": [{"t": 0, "x": float(x), "y": float(y), "psi": float(psi), "v": 0.0}]}


def _problem(x, y, v, psi=0.0, goal=None):
    return {
        "initial": {"x": float(x), "y": float(y), "delta": 0.0, "v": float(v),
                    "psi": float(psi)},
        "goal": goal,
    }


def _rect_goal(x0, x1, y0, y1, v, t):
    return {"polygon": [[float(x0), float(y0)], [float(x1), float(y0)],
                        [float(x1), float(y1)], [float(x0), float(y1)]],
            "v": list(v), "t": list(t)}


def _lane_goal(lanelets, v, t):
    return {"lanelets": list(lanelets), "v": list(v), "t": list(t)}


def _doc(horizon, lanelets, obstacles, problem):
    return {"dt": 0.1, "horizon": horizon, "lanelets": lanelets,
            "obstacles": obstacles, "problem": problem}


def _single_straight(length, v0, goal, horizon, obstacles=(), width=3.5, y0=0.0):
    return _doc(horizon, [_straight_lane(1, 0.0, length, 0.0, width)],
                list(obstacles), _problem(5.0, y0, v0, goal=goal))


def _two_lanes(length, v0, goal, horizon, obstacles=(), width=3.5):
    lanes = [
        _straight_lane(1, 0.0, length, width / 2, width, adj_left=2),
        _straight_lane(2, 0.0, length, 1.5 * width, width, adj_right=1),
    ]
    return _doc(horizon, lanes, list(obstacles), _problem(5.0, width / 2, v0, goal=goal))


def basic_straight_short():
    return _single_straight(200.0, 10.0, _rect_goal(85, 125, -1.75, 1.75, (0, 20), (15, 110)), 115)


def basic_straight_long():
    return _single_straight(260.0, 13.0, _rect_goal(150, 195, -1.75, 1.75, (0, 20), (20, 155)), 160)


def basic_straight_slow():
    return _single_straight(200.0, 6.0, _rect_goal(70, 105, -1.75, 1.75, (0, 20), (15, 100)), 105)


def basic_straight_fast():
    return _single_straight(240.0, 15.0, _rect_goal(100, 140, -1.75, 1.75, (0, 20), (15, 105)), 110)


def basic_straight_offset():
    doc = _single_straight(200.0, 10.0, _rect_goal(85, 125, -1.75, 1.75, (0, 20), (15, 110)),
                           115, y0=0.6)
    return doc


def _curve(radius, sweep_deg, split_frac, v0, t_win, horizon, ccw=True, width=4.0):
    sweep = np.radians(sweep_deg)
    ang0 = -np.pi / 2 if ccw else np.pi / 2
    ang_split = ang0 + split_frac * sweep * (1 if ccw else -1)
    ang1 = ang0 + sweep * (1 if ccw else -1)
    cy = radius if ccw else -radius
    lanes = [
        _arc_lane(1, 0.0, cy, radius, ang0, ang_split, width, successors=[2]),
        _arc_lane(2, 0.0, cy, radius, ang_split, ang1, width),
    ]
    x, y, psi = _arc_pose(0.0, cy, radius, ang0 + np.radians(2) * (1 if ccw else -1), ccw)
    problem = _problem(x, y, v0, psi=psi, goal=_lane_goal([2], (0, 20), t_win))
    return _doc(horizon, lanes, [], problem)


def basic_curve_left():
    return _curve(80.0, 100.0, 0.62, 10.0, (15, 115), 120, ccw=True)


def basic_curve_right():
    return _curve(70.0, 100.0, 0.62, 10.0, (15, 115), 120, ccw=False)


def basic_s_curve():
    r = 70.0
    sweep = np.radians(55.0)
    # first arc turns left, second turns right, joined tangentially
    a0, a1 = -np.pi / 2, -np.pi / 2 + sweep
    lane1 = _arc_lane(1, 0.0, r, r, a0, a1, 4.0, successors=[2])
    join_x = r * np.cos(a1)
    join_y = r + r * np.sin(a1)
    # center of the second (right-turning) arc mirrors across the join tangent
    c2x = 2 * join_x
    c2y = 2 * join_y - r
    b0, b1 = np.pi / 2 + sweep, np.pi / 2
    lane2 = _arc_lane(2, c2x, c2y, r, b0, b1, 4.0)
    x, y, psi = _arc_pose(0.0, r, r, a0 + np.radians(2), True)
    problem = _problem(x, y, 10.0, psi=psi, goal=_lane_goal([2], (0, 20), (15, 130)))
    return _doc(135, [lane1, lane2], [], problem)


def basic_lane_change_left():
    goal = _rect_goal(120, 165, 3.5, 7.0, (0, 20), (20, 125))
    return _two_lanes(240.0, 10.0, goal, 130)


def basic_lane_change_right():
    lanes = [
        _straight_lane(1, 0.0, 240.0, 5.25, 3.5, adj_right=2),
        _straight_lane(2, 0.0, 240.0, 1.75, 3.5, adj_left=1),
    ]
    goal = _rect_goal(120, 165, 0.0, 3.5, (0, 20), (20, 125))
    return _doc(130, lanes, [], _problem(5.0, 5.25, 10.0, goal=goal))


def basic_lead_far():
    lead = _moving_obstacle(11, 80.0, 0.0, 12.0, 125)
    return _single_straight(280.0, 10.0,
                            _rect_goal(110, 150, -1.75, 1.75, (0, 20), (15, 120)), 125,
                            obstacles=[lead])


def basic_two_lane_cruise():
    goal = _rect_goal(100, 140, 0.0, 7.0, (0, 20), (15, 110))
    return _two_lanes(220.0, 11.0, goal, 115)


def adv_follow_lead():
    lead = _moving_obstacle(21, 40.0, 0.0, 8.0, 140)
    return _single_straight(240.0, 10.0,
                            _rect_goal(95, 135, -1.75, 1.75, (0, 20), (15, 135)), 140,
                            obstacles=[lead])


def adv_overtake_stopped():
    blocker = _static_obstacle(22, 60.0, 1.75)
    goal = _rect_goal(130, 180, 3.5, 7.0, (0, 20), (20, 135))
    return _two_lanes(240.0, 10.0, goal, 140, obstacles=[blocker])


def adv_overtake_slow():
    lead = _moving_obstacle(23, 40.0, 1.75, 4.0, 140)
    goal = _rect_goal(140, 200, 3.5, 7.0, (0, 20), (20, 135))
    return _two_lanes(250.0, 10.0, goal, 140, obstacles=[lead])


def adv_merge_chain():
    lanes = [
        _straight_lane(1, 0.0, 100.0, 0.0, 3.5, successors=[2]),
        _straight_lane(2, 100.0, 260.0, 0.0, 3.5),
    ]
    mover = _moving_obstacle(24, 130.0, 0.0, 9.0, 155)
    goal = _rect_goal(180, 230, -1.75, 1.75, (0, 20), (20, 150))
    return _doc(155, lanes, [mover], _problem(5.0, 0.0, 10.0, goal=goal))


def adv_speed_limited():
    lanes = [
        _straight_lane(1, 0.0, 100.0, 0.0, 3.5, successors=[2]),
        _straight_lane(2, 100.0, 250.0, 0.0, 3.5, speed_limit=8.0),
    ]
    goal = _rect_goal(160, 210, -1.75, 1.75, (0, 20), (20, 160))
    return _doc(165, lanes, [], _problem(5.0, 0.0, 10.0, goal=goal))


def adv_curve_tight():
    return _curve(15.0, 150.0, 0.55, 7.0, (10, 90), 95, ccw=True)


def adv_stop_goal():
    return _single_straight(160.0, 10.0,
                            _rect_goal(70, 95, -1.75, 1.75, (0.0, 2.5), (30, 140)), 145)


def adv_wall_dead_end():
    wall = [
        _static_obstacle(31, 90.0, -1.0, width=1.6),
        _static_obstacle(32, 90.0, 0.8, width=1.6),
    ]
    return _single_straight(200.0, 10.0,
                            _rect_goal(130, 170, -1.75, 1.75, (0, 20), (20, 110)), 115,
                            obstacles=wall)


def adv_blocked_goal_lane():
    blocker = _static_obstacle(33, 70.0, 1.75)
    slow = _moving_obstacle(34, 30.0, 5.25, 6.0, 165)
    goal = _rect_goal(140, 190, 0.0, 7.0, (0, 20), (20, 160))
    return _two_lanes(250.0, 10.0, goal, 165, obstacles=[blocker, slow])


def adv_braking_lead():
    lead = _moving_obstacle(35, 45.0, 0.0, 11.0, 150, accel=-0.6)
    return _single_straight(240.0, 10.0,
                            _rect_goal(110, 150, -1.75, 1.75, (0, 20), (20, 145)), 150,
                            obstacles=[lead])


SCENARIOS = (
    ("basic_straight_short", basic_straight_short),
    ("basic_straight_long", basic_straight_long),
    ("basic_straight_slow", basic_straight_slow),
    ("basic_straight_fast", basic_straight_fast),
    ("basic_straight_offset", basic_straight_offset),
    ("basic_curve_left", basic_curve_left),
    ("basic_curve_right", basic_curve_right),
    ("basic_s_curve", basic_s_curve),
    ("basic_lane_change_left", basic_lane_change_left),
    ("basic_lane_change_right", basic_lane_change_right),
    ("basic_lead_far", basic_lead_far),
    ("basic_two_lane_cruise", basic_two_lane_cruise),
    ("adv_follow_lead", adv_follow_lead),
    ("adv_overtake_stopped", adv_overtake_stopped),
    ("adv_overtake_slow", adv_overtake_slow),
    ("adv_merge_chain", adv_merge_chain),
    ("adv_speed_limited", adv_speed_limited),
    ("adv_curve_tight", adv_curve_tight),
    ("adv_stop_goal", adv_stop_goal),
    ("adv_wall_dead_end", adv_wall_dead_end),
    ("adv_blocked_goal_lane", adv_blocked_goal_lane),
    ("adv_braking_lead", adv_braking_lead),
)

BASIC_NAMES = tuple(name for name, _ in SCENARIOS if name.startswith("basic_"))


def build_corpus(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in SCENARIOS:
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(builder(), indent=2) + "\n")
        written.append(path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "corpus"
    paths = build_corpus(target)
    print(f"wrote {len(paths)} scenarios to {target}")
