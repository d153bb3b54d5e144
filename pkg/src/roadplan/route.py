"""Lanelet routing and reference-line construction.

Finds a lanelet sequence from the initial position to the goal region
(successor hops are free, lane changes are penalized) and builds a smooth
reference polyline along it for curvilinear planning and cost evaluation.
"""

from __future__ import annotations

import heapq

import numpy as np

from .curvilinear import CurvilinearFrame, ProjectionError
from .scenario import GoalSpec, LaneletNetwork, Scenario


class RouteError(ValueError):
    """No route connects the initial position to the goal region."""


def goal_centerline_intervals(net: LaneletNetwork, goal: GoalSpec,
                              step: float = 0.5) -> dict[int, tuple[float, float]]:
    """Arc-length window per lanelet where the centerline runs through the goal.

    A lanelet only counts as a goal lanelet when its center passes through the
    region: the planners drive the centerline, and the membership test uses
    the vehicle reference point.
    """
    out: dict[int, tuple[float, float]] = {}
    if goal.lanelet_ids is not None:
        for lid in goal.lanelet_ids:
            out[lid] = (0.0, net[lid].length)
        return out
    for lid in net.ids():
        lanelet = net[lid]
        frame = lanelet.frame
        s = np.arange(0.0, frame.length + step, step)
        s = np.clip(s, 0.0, frame.length)
        pts = frame.to_cartesian_many(s, np.zeros_like(s))
        inside = goal.polygon.contains_points(pts)
        if inside.any():
            hit = s[inside]
            out[lid] = (float(hit.min()), float(hit.max()))
    return out


def goal_lanelet_ids(net: LaneletNetwork, goal: GoalSpec) -> list[int]:
    ids = sorted(goal_centerline_intervals(net, goal))
    if not ids:
        raise RouteError("goal region does not cover any lane centerline")
    return ids


def route_lanelets(net: LaneletNetwork, start_ids, goal_ids) -> list[int]:
    """Cheapest lanelet sequence: lane changes cost much more than hops."""
    targets = set(goal_ids)
    heap = []
    for sid in sorted(start_ids):
        heapq.heappush(heap, (0.0, sid, (sid,)))
    best: dict[int, float] = {}
    while heap:
        cost, lid, path = heapq.heappop(heap)
        if lid in targets:
            return list(path)
        if best.get(lid, np.inf) <= cost:
            continue
        best[lid] = cost
        lanelet = net[lid]
        for nxt in sorted(lanelet.successors):
            heapq.heappush(heap, (cost + 1.0, nxt, path + (nxt,)))
        for nxt in (lanelet.adj_left, lanelet.adj_right):
            if nxt is not None and nxt not in path:
                heapq.heappush(heap, (cost + 10.0, nxt, path + (nxt,)))
    raise RouteError(f"no route from lanelets {sorted(start_ids)} to {sorted(targets)}")


def _extend_polyline(pts: np.ndarray, ahead: float = 30.0, behind: float = 30.0) -> np.ndarray:
    """Prolong a polyline tangentially at both ends to keep projections in-domain."""
    t0 = pts[1] - pts[0]
    t0 = t0 / np.linalg.norm(t0)
    t1 = pts[-1] - pts[-2]
    t1 = t1 / np.linalg.norm(t1)
    return np.concatenate([[pts[0] - behind * t0], pts, [pts[-1] + ahead * t1]], axis=0)


def _resample(pts: np.ndarray, step: float = 1.0) -> np.ndarray:
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 1e-9
    pts = np.concatenate([pts[:1], pts[1:][keep]], axis=0)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n = max(2, int(np.ceil(cum[-1] / step)) + 1)
    s = np.linspace(0.0, cum[-1], n)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.stack([x, y], axis=1)


def _smooth(pts: np.ndarray, window: int = 9, passes: int = 2) -> np.ndarray:
    if len(pts) < window:
        return pts
    out = pts.copy()
    kernel = np.ones(window) / window
    pad = window // 2
    for _ in range(passes):
        padded = np.concatenate([out[:1].repeat(pad, axis=0), out, out[-1:].repeat(pad, axis=0)])
        out = np.stack(
            [np.convolve(padded[:, 0], kernel, "valid"), np.convolve(padded[:, 1], kernel, "valid")],
            axis=1,
        )
    return out


def _chain_centerline(net: LaneletNetwork, run: list[int]) -> np.ndarray:
    pts = [net[run[0]].center]
    for lid in run[1:]:
        nxt = net[lid].center
        if np.allclose(pts[-1][-1], nxt[0], atol=1e-6):
            nxt = nxt[1:]
        pts.append(nxt)
    return np.concatenate(pts, axis=0)


def build_reference(net: LaneletNetwork, sequence: list[int], start_pos=None,
                    obstacles=(), blend_length: float = 30.0) -> np.ndarray:
    """Reference polyline along a lanelet sequence with blended lane changes.

    Successor-linked stretches use the exact lane centers. Each adjacency hop
    crosses over with a smoothstep blend. The crossing starts a little ahead
    of the entry position and, when traffic blocks the current lane, before
    the first obstacle so the local planner is not boxed in behind it.
    """
    runs: list[list[int]] = [[sequence[0]]]
    for prev, cur in zip(sequence, sequence[1:]):
        if cur in net[prev].successors:
            runs[-1].append(cur)
        else:
            runs.append([cur])

    line = _resample(_chain_centerline(net, runs[0]), step=1.0)
    for run in runs[1:]:
        target = _resample(_chain_centerline(net, run), step=1.0)
        tgt_frame = CurvilinearFrame(target)
        line_frame = CurvilinearFrame(line)
        s_start = 0.0
        if start_pos is not None:
            try:
                s_start, _ = line_frame.to_curvilinear(start_pos)
            except ProjectionError:
                s_start = 0.0
        s_change = s_start + 20.0
        for ob in obstacles:
            x, y, _, _ = ob.state_at(0)
            try:
                s_ob, d_ob = line_frame.to_curvilinear((x, y))
            except ProjectionError:
                continue
            if abs(d_ob) < 2.0 and s_start < s_ob < s_change + 70.0:
                s_change = min(s_change, s_ob - 30.0)
        s_change = max(s_change, s_start + 8.0)

        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(line, axis=0).T))])
        blended = []
        cross_done = False
        for i, pt in enumerate(line):
            w = (cum[i] - s_change) / blend_length
            if w <= 0.0:
                blended.append(pt)
                continue
            try:
                s_t, _ = tgt_frame.to_curvilinear(pt)
            except ProjectionError:
                blended.append(pt)
                continue
            w = min(1.0, w)
            w = w * w * (3.0 - 2.0 * w)  # smoothstep
            blended.append((1.0 - w) * pt
                           + w * tgt_frame.to_cartesian(min(s_t, tgt_frame.length), 0.0))
            if w >= 1.0:
                rest = target[np.searchsorted(tgt_frame.cum_len, s_t):]
                if len(rest):
                    blended.extend(rest)
                cross_done = True
                break
        if not cross_done and len(blended) == len(line):
            blended.extend(target[-2:])
        line = _resample(np.asarray(blended), step=1.0)
    return _smooth(line)


def route_reference(sc: Scenario, extend: float = 40.0) -> tuple[list[int], CurvilinearFrame]:
    """Route from the initial position to the goal, as a curvilinear frame."""
    start_ids = sc.network.lanelets_containing(sc.problem.initial_state.position())
    if not start_ids:
        raise RouteError("initial position is not on any lanelet")
    goal_ids = goal_lanelet_ids(sc.network, sc.problem.goal)
    sequence = route_lanelets(sc.network, start_ids, goal_ids)
    line = build_reference(sc.network, sequence,
                           start_pos=sc.problem.initial_state.position(),
                           obstacles=sc.obstacles)
    frame = CurvilinearFrame(_extend_polyline(line, ahead=extend, behind=extend))
    return sequence, frame


def goal_arc_interval(sc: Scenario, frame: CurvilinearFrame) -> tuple[float, float]:
    """Projection of the goal region onto the route frame, as an s-interval."""
    goal = sc.problem.goal
    pts: list[np.ndarray] = []
    if goal.polygon is not None:
        pts.extend(goal.polygon.vertices)
        pts.append(goal.polygon.centroid())
    else:
        for lid in goal.lanelet_ids:
            pts.extend(sc.network[lid].center)
    s_vals = []
    for p in pts:
        try:
            s, d = frame.to_curvilinear(p)
        except ProjectionError:
            continue
        if abs(d) < 15.0:
            s_vals.append(s)
    if not s_vals:
        raise RouteError("goal region does not project onto the route frame")
    return min(s_vals), max(s_vals)
