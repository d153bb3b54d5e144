"""Kinematic single-track vehicle model.

State is (x, y, delta, v, psi); inputs are steering velocity and longitudinal
acceleration. Integration is classical RK4 with zero-order-hold inputs that
are saturated once per step from the entry state, so a rollout followed by
input reconstruction reproduces the inputs bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .scenario import ControlInput, VehicleState

_EPS_V = 1e-6


@dataclass(frozen=True)
class VehicleParameters:
    """Vehicle geometry and input limits (defaults: compact-car class, overridable)."""

    wheelbase: float = 2.578
    length: float = 4.298
    width: float = 1.674
    a_max: float = 11.5
    v_max: float = 45.8
    v_switch: float = 7.32
    delta_max: float = 0.91
    v_delta_max: float = 0.4
    power_limit: bool = True

    def __post_init__(self):
        for name in ("wheelbase", "length", "width", "a_max", "v_max", "v_switch",
                     "delta_max", "v_delta_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"vehicle parameter {name} must be positive")
        if self.delta_max >= np.pi / 2:
            raise ValueError("delta_max must be below pi/2")

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParameters":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return replace(cls(), **known)

    @classmethod
    def from_file(cls, path) -> "VehicleParameters":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_PARAMETERS = VehicleParameters()


@dataclass(frozen=True)
class StateDerivative:
    dx: float
    dy: float
    ddelta: float
    dv: float
    dpsi: float


def accel_bounds(v: float, p: VehicleParameters) -> tuple[float, float]:
    """Admissible acceleration interval at speed v (engine power caps a > 0)."""
    if not p.power_limit or v <= p.v_switch:
        return -p.a_max, p.a_max
    return -p.a_max, p.a_max * p.v_switch / max(v, _EPS_V)


def saturate_input(state: VehicleState, u: ControlInput, p: VehicleParameters,
                   dt: float | None = None) -> ControlInput:
    """Clip an input to the box limits, the power limit and the steering stops."""
    v_delta = float(np.clip(u.v_delta, -p.v_delta_max, p.v_delta_max))
    if dt is not None:
        lo = (-p.delta_max - state.delta) / dt
        hi = (p.delta_max - state.delta) / dt
        v_delta = float(np.clip(v_delta, min(lo, 0.0), max(hi, 0.0)))
    else:
        if state.delta >= p.delta_max and v_delta > 0:
            v_delta = 0.0
        elif state.delta <= -p.delta_max and v_delta < 0:
            v_delta = 0.0
    a_lo, a_hi = accel_bounds(state.v, p)
    a = float(np.clip(u.a, a_lo, a_hi))
    return ControlInput(v_delta=v_delta, a=a)


def ks_derivative(state: VehicleState, u: ControlInput, p: VehicleParameters) -> StateDerivative:
    """Single-track ODE right-hand side after input saturation."""
    u = saturate_input(state, u, p)
    delta = float(np.clip(state.delta, -p.delta_max, p.delta_max))
    return StateDerivative(
        dx=state.v * np.cos(state.psi),
        dy=state.v * np.sin(state.psi),
        ddelta=u.v_delta,
        dv=u.a,
        dpsi=state.v * np.tan(delta) / p.wheelbase,
    )


def _rk4_batch(states: np.ndarray, inputs: np.ndarray, dt: float, p: VehicleParameters) -> np.ndarray:
    """One RK4 step for a (b, 5) state batch under (b, 2) entry-saturated inputs."""

    def f(x):
        out = np.empty_like(x)
        out[:, 0] = x[:, 3] * np.cos(x[:, 4])
        out[:, 1] = x[:, 3] * np.sin(x[:, 4])
        out[:, 2] = inputs[:, 0]
        out[:, 3] = inputs[:, 1]
        out[:, 4] = x[:, 3] * np.tan(np.clip(x[:, 2], -p.delta_max, p.delta_max)) / p.wheelbase
        return out

    k1 = f(states)
    k2 = f(states + 0.5 * dt * k1)
    k3 = f(states + 0.5 * dt * k2)
    k4 = f(states + dt * k3)
    return states + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _saturate_batch(states: np.ndarray, inputs: np.ndarray, dt: float,
                    p: VehicleParameters) -> np.ndarray:
    out = np.empty_like(inputs)
    v_delta = np.clip(inputs[:, 0], -p.v_delta_max, p.v_delta_max)
    lo = np.minimum((-p.delta_max - states[:, 2]) / dt, 0.0)
    hi = np.maximum((p.delta_max - states[:, 2]) / dt, 0.0)
    out[:, 0] = np.clip(v_delta, lo, hi)
    v = states[:, 3]
    if p.power_limit:
        a_hi = p.a_max * np.minimum(1.0, p.v_switch / np.maximum(v, _EPS_V))
    else:
        a_hi = np.full_like(v, p.a_max)
    out[:, 1] = np.clip(inputs[:, 1], -p.a_max, a_hi)
    return out


def integrate_step(state: VehicleState, u: ControlInput, dt: float,
                   p: VehicleParameters) -> VehicleState:
    """One RK4 step with the input held constant over the step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = state.to_array()[None, :]
    uu = _saturate_batch(s, np.array([[u.v_delta, u.a]]), dt, p)
    return VehicleState.from_array(_rk4_batch(s, uu, dt, p)[0])


def rollout(x0: VehicleState, inputs, dt: float, p: VehicleParameters) -> np.ndarray:
    """Roll an input sequence forward; returns a (n + 1, 5) state array."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    states = np.empty((len(inputs) + 1, 5))
    states[0] = x0.to_array()
    cur = states[0][None, :]
    for k in range(len(inputs)):
        uu = _saturate_batch(cur, inputs[k][None, :], dt, p)
        cur = _rk4_batch(cur, uu, dt, p)
        states[k + 1] = cur[0]
    return states


def rollout_batch(x0: VehicleState, inputs: np.ndarray, dt: float,
                  p: VehicleParameters) -> np.ndarray:
    """Roll a (b, n, 2) batch of input sequences from a shared initial state."""
    b, n, _ = inputs.shape
    states = np.empty((b, n + 1, 5))
    states[:, 0, :] = x0.to_array()
    cur = states[:, 0, :]
    for k in range(n):
        uu = _saturate_batch(cur, inputs[:, k, :], dt, p)
        cur = _rk4_batch(cur, uu, dt, p)
        states[:, k + 1, :] = cur
    return states


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def tracking_controller_inputs(z_ref: np.ndarray, x0: VehicleState, dt: float,
                               p: VehicleParameters,
                               v_ref: np.ndarray | None = None) -> np.ndarray:
    """Inputs of a simple geometric tracker simulated along a reference.

    Pure-pursuit steering toward a lookahead point plus proportional speed
    control toward the per-point reference velocities. The returned inputs,
    rolled out from `x0`, follow the reference closed-loop; useful both as a
    warm start for trajectory optimization and to execute geometric plans.
    """
    z_ref = np.asarray(z_ref, dtype=float)
    n = len(z_ref) - 1
    if v_ref is None:
        ds = np.maximum(np.hypot(*np.diff(z_ref, axis=0).T), 1e-9)
        v_ref = np.concatenate([[max(x0.v, 0.1)], ds / dt])
    u = np.zeros((n, 2))
    state = x0
    look = 4
    for k in range(n):
        tgt = z_ref[min(k + look, n)]
        dx, dy = tgt[0] - state.x, tgt[1] - state.y
        dist = max(np.hypot(dx, dy), 1e-6)
        heading_err = wrap_angle(np.arctan2(dy, dx) - state.psi)
        delta_des = np.clip(np.arctan(2.0 * p.wheelbase * np.sin(heading_err) / dist),
                            -p.delta_max, p.delta_max)
        v_delta = np.clip((delta_des - state.delta) / (2.0 * dt),
                          -p.v_delta_max, p.v_delta_max)
        a = np.clip((v_ref[min(k + 1, n)] - state.v) / (1.5 * dt), -p.a_max, p.a_max)
        u[k] = (v_delta, a)
        state = integrate_step(state, ControlInput(float(v_delta), float(a)), dt, p)
    return u


@dataclass(eq=False)
class Trajectory:
    """Time-indexed state sequence with the inputs that connect the states."""

    dt: float
    states: tuple[VehicleState, ...]
    inputs: tuple[ControlInput, ...] = ()

    def __post_init__(self):
        self.states = tuple(self.states)
        self.inputs = tuple(self.inputs)
        if self.dt <= 0:
            raise ValueError("trajectory dt must be positive")
        if len(self.states) < 1:
            raise ValueError("trajectory needs at least one state")
        if self.inputs and len(self.inputs) != len(self.states) - 1:
            raise ValueError("trajectory needs exactly one input per step")

    def __len__(self) -> int:
        return len(self.states)

    def states_array(self) -> np.ndarray:
        return np.array([s.to_array() for s in self.states])

    def inputs_array(self) -> np.ndarray:
        if not self.inputs:
            return np.zeros((0, 2))
        return np.array([[u.v_delta, u.a] for u in self.inputs])

    @classmethod
    def from_arrays(cls, dt: float, states: np.ndarray, inputs=None) -> "Trajectory":
        st = tuple(VehicleState.from_array(row) for row in np.asarray(states, dtype=float))
        if inputs is None or len(inputs) == 0:
            return cls(dt=dt, states=st)
        ins = tuple(ControlInput(float(u[0]), float(u[1])) for u in np.asarray(inputs, dtype=float))
        return cls(dt=dt, states=st, inputs=ins)

    def to_solution_dict(self, scenario_id: str, planner: str) -> dict:
        return {
            "scenario_id": scenario_id,
            "planner": planner,
            "dt": self.dt,
            "states": [
                {"x": s.x, "y": s.y, "delta": s.delta, "v": s.v, "psi": s.psi}
                for s in self.states
            ],
            "inputs": [{"v_delta": u.v_delta, "a": u.a} for u in self.inputs],
        }

    @classmethod
    def from_solution_dict(cls, data: dict) -> "Trajectory":
        states = tuple(
            VehicleState(s["x"], s["y"], s["delta"], s["v"], s["psi"]) for s in data["states"]
        )
        inputs = tuple(ControlInput(u["v_delta"], u["a"]) for u in data.get("inputs", ()))
        if inputs and len(inputs) != len(states) - 1:
            raise ValueError("solution must carry one input per step")
        return cls(dt=float(data["dt"]), states=states, inputs=inputs)


def reconstruct_inputs(traj: Trajectory, p: VehicleParameters) -> tuple[np.ndarray, np.ndarray]:
    """Recover per-step inputs from the state sequence and measure consistency.

    The candidate input for step k is the finite difference of steering angle
    and velocity. The residual is the max-norm gap between simulating that
    candidate and the recorded next state, with angle components wrapped.
    """
    S = traj.states_array()
    if len(S) < 2:
        return np.zeros((0, 2)), np.zeros(0)
    dt = traj.dt
    cand = np.stack([np.diff(S[:, 2]) / dt, np.diff(S[:, 3]) / dt], axis=1)
    uu = _saturate_batch(S[:-1], cand, dt, p)
    pred = _rk4_batch(S[:-1], uu, dt, p)
    diff = np.abs(pred - S[1:])
    diff[:, 4] = np.abs(wrap_angle(pred[:, 4] - S[1:, 4]))
    residuals = diff.max(axis=1)
    return cand, residuals


def inputs_within_bounds(traj: Trajectory, p: VehicleParameters,
                         slack: float = 1e-6) -> np.ndarray:
    """Per-step check of the candidate inputs against the state-dependent limits."""
    S = traj.states_array()
    if len(S) < 2:
        return np.zeros(0, dtype=bool)
    dt = traj.dt
    v_delta = np.diff(S[:, 2]) / dt
    a = np.diff(S[:, 3]) / dt
    v = S[:-1, 3]
    if p.power_limit:
        a_hi = p.a_max * np.minimum(1.0, p.v_switch / np.maximum(v, _EPS_V))
    else:
        a_hi = np.full_like(v, p.a_max)
    ok = np.abs(v_delta) <= p.v_delta_max + slack
    ok &= a <= a_hi + slack
    ok &= a >= -p.a_max - slack
    return ok
