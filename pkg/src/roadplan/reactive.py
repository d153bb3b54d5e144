"""Reactive longitudinal traffic: obstacles follow their lane and adapt their
speed to the nearest leader (including the ego vehicle) with the intelligent
driver model. Deterministic, no randomness."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .curvilinear import ProjectionError
from .scenario import Scenario, VehicleState


@dataclass(frozen=True)
class IdmParameters:
    min_gap: float = 2.0
    time_headway: float = 1.5
    accel: float = 1.5
    decel: float = 2.0
    exponent: float = 4.0
    sensing_range: float = 100.0

    @classmethod
    def from_dict(cls, data: dict) -> "IdmParameters":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return replace(cls(), **known)


def idm_acceleration(v: float, v_desired: float, gap: float | None,
                     closing_speed: float, prm: IdmParameters) -> float:
    """IDM acceleration; `gap` is the bumper-to-bumper distance to the leader
    (None for a free road), `closing_speed` is own speed minus leader speed."""
    v_desired = max(v_desired, 0.1)
    free = 1.0 - (max(v, 0.0) / v_desired) ** prm.exponent
    if gap is None:
        return prm.accel * free
    gap = max(gap, 1e-3)
    desired_gap = (prm.min_gap + max(0.0, v * prm.time_headway)
                   + v * closing_speed / (2.0 * np.sqrt(prm.accel * prm.decel)))
    return prm.accel * (free - (desired_gap / gap) ** 2)


@dataclass
class _Agent:
    oid: int
    lanelet: int
    s: float
    d: float
    v: float
    length: float
    v_desired: float


class ReactiveWorld:
    """Closed-loop obstacle simulation along lane centers.

    Obstacles are snapped to the lanelet that holds their first recorded
    state and keep their lateral offset. Each step every obstacle reacts to
    its nearest leader on the same lanelet or its chain of successors, with
    the ego vehicle treated like any other leader. Velocity never drops below
    zero and nothing moves backward.
    """

    def __init__(self, sc: Scenario, prm: IdmParameters | None = None):
        self.sc = sc
        self.prm = prm or IdmParameters()
        self.agents: list[_Agent] = []
        for ob in sc.obstacles:
            x, y, psi, v = ob.states[0]
            lids = sc.network.lanelets_containing((x, y))
            if not lids:
                continue
            # prefer the lanelet whose direction matches the heading
            best, best_err = None, None
            for lid in lids:
                frame = sc.network[lid].frame
                try:
                    s, d = frame.to_curvilinear((x, y))
                except ProjectionError:
                    continue
                err = abs((psi - frame.heading_at(s) + np.pi) % (2 * np.pi) - np.pi)
                if best is None or err < best_err:
                    best = _Agent(ob.id, lid, s, d, float(v), ob.length,
                                  v_desired=max(float(v), 1.0))
                    best_err = err
            if best is not None:
                limit = sc.network[best.lanelet].speed_limit
                if limit is not None:
                    best.v_desired = min(best.v_desired, limit)
                self.agents.append(best)

    def _position(self, agent: _Agent) -> tuple[float, float, float]:
        frame = self.sc.network[agent.lanelet].frame
        s = min(agent.s, frame.length)
        x, y = frame.to_cartesian(s, agent.d)
        return float(x), float(y), frame.heading_at(s)

    def states(self) -> dict[int, tuple[float, float, float, float]]:
        out = {}
        for agent in self.agents:
            x, y, psi = self._position(agent)
            out[agent.oid] = (x, y, psi, agent.v)
        return out

    def _leader_gap(self, agent: _Agent, ego: VehicleState | None,
                    ego_length: float) -> tuple[float, float] | None:
        """(bumper gap, leader speed) of the nearest leader ahead, if any."""
        candidates: list[tuple[float, float, float]] = []  # (ds, length, speed)
        net = self.sc.network

        def add(lanelet_id, s_other, length, speed, offset):
            ds = s_other + offset - agent.s
            if 0.0 < ds <= self.prm.sensing_range:
                candidates.append((ds, length, speed))

        chain = [(agent.lanelet, 0.0)]
        cur, offset = agent.lanelet, 0.0
        while net[cur].successors and offset < self.prm.sensing_range:
            offset += net[cur].length
            cur = sorted(net[cur].successors)[0]
            chain.append((cur, offset))

        for other in self.agents:
            if other is agent:
                continue
            for lid, offset in chain:
                if other.lanelet == lid:
                    add(lid, other.s, other.length, other.v, offset)
        if ego is not None:
            for lid, offset in chain:
                lanelet = net[lid]
                if not lanelet.contains_point((ego.x, ego.y)):
                    continue
                try:
                    s_ego, _ = lanelet.frame.to_curvilinear((ego.x, ego.y))
                except ProjectionError:
                    continue
                add(lid, s_ego, ego_length, ego.v, offset)
        if not candidates:
            return None
        ds, length, speed = min(candidates)
        gap = ds - 0.5 * agent.length - 0.5 * length
        return gap, speed

    def step(self, ego: VehicleState | None, ego_length: float = 4.298) -> None:
        """Advance every obstacle by one time step, reacting to the leaders."""
        dt = self.sc.dt
        net = self.sc.network
        accels = []
        for agent in self.agents:
            leader = self._leader_gap(agent, ego, ego_length)
            if leader is None:
                a = idm_acceleration(agent.v, agent.v_desired, None, 0.0, self.prm)
            else:
                gap, speed = leader
                a = idm_acceleration(agent.v, agent.v_desired, gap, agent.v - speed,
                                     self.prm)
            accels.append(a)
        for agent, a in zip(self.agents, accels):
            v_new = max(agent.v + a * dt, 0.0)
            advance = max(agent.v * dt + 0.5 * a * dt * dt, 0.0)
            agent.s += advance
            agent.v = v_new
            lanelet = net[agent.lanelet]
            if agent.s > lanelet.length:
                if lanelet.successors:
                    agent.s -= lanelet.length
                    agent.lanelet = sorted(lanelet.successors)[0]
                else:
                    agent.s = lanelet.length
                    agent.v = 0.0

    def predict(self, n_steps: int) -> dict[int, np.ndarray]:
        """IDM forward simulation without the ego, as (n + 1, 4) state arrays."""
        saved = [replace_agent(a) for a in self.agents]
        out = {a.oid: np.zeros((n_steps + 1, 4)) for a in self.agents}
        for oid, (x, y, psi, v) in self.states().items():
            out[oid][0] = (x, y, psi, v)
        for k in range(1, n_steps + 1):
            self.step(ego=None)
            for oid, st in self.states().items():
                out[oid][k] = st
        self.agents = saved
        return out


def reactive_obstacles_step(sc: Scenario, world: ReactiveWorld,
                            ego_state: VehicleState, k: int,
                            ego_length: float = 4.298) -> dict[int, tuple]:
    """One deterministic reactive update; returns the obstacle states at k+1."""
    world.step(ego_state, ego_length)
    return world.states()


def replace_agent(a: _Agent) -> _Agent:
    return _Agent(a.oid, a.lanelet, a.s, a.d, a.v, a.length, a.v_desired)
