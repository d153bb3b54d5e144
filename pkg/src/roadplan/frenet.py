"""Sampling-based planner in curvilinear coordinates.

Each cycle connects the current state to a grid of terminal states (lateral
offsets, end velocities, durations) with quintic/quartic polynomials, converts
the candidates to Cartesian trajectories, filters them for kinematic limits,
collisions and road compliance, ranks the survivors by a comfort/safety cost
and executes a short prefix of the best one before replanning.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .curvilinear import CurvilinearFrame, ProjectionError
from .dynamics import (
    Trajectory,
    VehicleParameters,
    accel_bounds,
    rollout,
    tracking_controller_inputs,
    wrap_angle,
)
from .errors import PlanningFailure, TimeoutExceeded
from .geometry import oriented_box, points_in_ring, polygons_intersect
from .route import goal_arc_interval, route_reference
from .scenario import ControlInput, Scenario, VehicleState, goal_reached, obstacle_occupancy


@dataclass(frozen=True)
class FrenetConfig:
    d_targets: tuple[float, ...] = (-3.0, -1.5, 0.0, 1.5, 3.0)
    v_targets_frac: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    t_targets: tuple[float, ...] = (2.0, 3.0, 4.0)
    v_desired: float = 12.0
    replan_stride: int = 5
    w_jerk: float = 0.01
    w_lat: float = 8.0
    w_vel: float = 1.0
    w_dist: float = 5.0
    dist_decay: float = 0.2
    safety_margin: float = 0.4  # obstacle inflation during sampling only
    rollout_candidates: int = 10

    @classmethod
    def from_dict(cls, data: dict) -> "FrenetConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        scheme = data.get("scheme", {})
        for key in ("d_targets", "v_targets_frac", "t_targets"):
            if key in scheme:
                known[key] = tuple(scheme[key])
        weights = data.get("weights", {})
        for key, attr in (("jerk", "w_jerk"), ("lat", "w_lat"), ("vel", "w_vel"),
                          ("dist", "w_dist")):
            if key in weights:
                known[attr] = weights[key]
        for tup in ("d_targets", "v_targets_frac", "t_targets"):
            if tup in known:
                known[tup] = tuple(known[tup])
        return replace(cls(), **known)


@dataclass(frozen=True)
class FrenetState:
    s: float
    s_dot: float
    s_ddot: float
    d: float
    d_dot: float
    d_ddot: float


@dataclass(frozen=True)
class SamplingScheme:
    d_targets: tuple[float, ...]
    v_targets: tuple[float, ...]
    t_targets: tuple[float, ...]

    def __post_init__(self):
        if not (self.d_targets and self.v_targets and self.t_targets):
            raise ValueError("sampling scheme lists must be nonempty")
        if any(t <= 0 for t in self.t_targets):
            raise ValueError("sampling durations must be positive")


class QuinticPolynomial:
    """Degree-5 polynomial fixed by position/velocity/acceleration at both ends."""

    def __init__(self, x0, v0, a0, x1, v1, a1, T):
        if T <= 1e-6:
            raise ValueError("polynomial duration too small")
        self.coef = np.zeros(6)
        self.coef[0] = x0
        self.coef[1] = v0
        self.coef[2] = 0.5 * a0
        m = np.array([
            [T**3, T**4, T**5],
            [3 * T**2, 4 * T**3, 5 * T**4],
            [6 * T, 12 * T**2, 20 * T**3],
        ])
        rhs = np.array([
            x1 - self.coef[0] - self.coef[1] * T - self.coef[2] * T**2,
            v1 - self.coef[1] - 2 * self.coef[2] * T,
            a1 - 2 * self.coef[2],
        ])
        self.coef[3:] = np.linalg.solve(m, rhs)

    def value(self, t):
        c = self.coef
        return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))

    def deriv1(self, t):
        c = self.coef
        return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])))

    def deriv2(self, t):
        c = self.coef
        return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]))

    def deriv3(self, t):
        c = self.coef
        return 6 * c[3] + t * (24 * c[4] + t * 60 * c[5])


class QuarticPolynomial:
    """Degree-4 polynomial: full start state, terminal velocity/acceleration."""

    def __init__(self, x0, v0, a0, v1, a1, T):
        if T <= 1e-6:
            raise ValueError("polynomial duration too small")
        self.coef = np.zeros(5)
        self.coef[0] = x0
        self.coef[1] = v0
        self.coef[2] = 0.5 * a0
        m = np.array([
            [3 * T**2, 4 * T**3],
            [6 * T, 12 * T**2],
        ])
        rhs = np.array([
            v1 - self.coef[1] - 2 * self.coef[2] * T,
            a1 - 2 * self.coef[2],
        ])
        self.coef[3:] = np.linalg.solve(m, rhs)

    def value(self, t):
        c = self.coef
        return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])))

    def deriv1(self, t):
        c = self.coef
        return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * 4 * c[4]))

    def deriv2(self, t):
        c = self.coef
        return 2 * c[2] + t * (6 * c[3] + t * 12 * c[4])

    def deriv3(self, t):
        c = self.coef
        return 6 * c[3] + t * 24 * c[4]


@dataclass(eq=False)
class PolynomialPair:
    lateral: QuinticPolynomial
    longitudinal: QuarticPolynomial
    duration: float


@dataclass(eq=False)
class TrajectorySample:
    index: int
    pair: PolynomialPair
    cartesian: Trajectory | None = None
    feasible: bool = False
    reject_reason: str | None = None
    cost: float = float("inf")
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s_dot: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jerk_lon: np.ndarray = field(default_factory=lambda: np.zeros(0))


def sample_terminal_states(cur: FrenetState, scheme: SamplingScheme) -> list[tuple[FrenetState, float]]:
    """Cartesian product of the scheme lists; terminal position stays free."""
    out = []
    for T in scheme.t_targets:
        for v in scheme.v_targets:
            for d in scheme.d_targets:
                out.append((FrenetState(s=0.0, s_dot=v, s_ddot=0.0,
                                        d=d, d_dot=0.0, d_ddot=0.0), T))
    return out


def fit_polynomials(start: FrenetState, end: FrenetState, T: float) -> PolynomialPair:
    lateral = QuinticPolynomial(start.d, start.d_dot, start.d_ddot,
                                end.d, end.d_dot, end.d_ddot, T)
    longitudinal = QuarticPolynomial(start.s, start.s_dot, start.s_ddot,
                                     end.s_dot, end.s_ddot, T)
    return PolynomialPair(lateral=lateral, longitudinal=longitudinal, duration=T)


def to_cartesian_sample(pair: PolynomialPair, frame: CurvilinearFrame, dt: float,
                        p: VehicleParameters | None = None,
                        horizon: float | None = None) -> TrajectorySample:
    """Cartesian candidate trajectory on a uniform grid.

    Past the polynomial's own duration the sample continues with frozen
    lateral offset and constant velocity (the terminal derivatives are zero by
    construction), so candidates of different durations are comparable.
    """
    from .dynamics import DEFAULT_PARAMETERS

    p = p or DEFAULT_PARAMETERS
    total = pair.duration if horizon is None else horizon
    n = max(1, int(round(total / dt)))
    t = np.arange(n + 1) * dt
    tt = np.minimum(t, pair.duration)
    d = pair.lateral.value(tt)
    s = pair.longitudinal.value(tt)
    past = t > pair.duration
    if past.any():
        v_end = pair.longitudinal.deriv1(pair.duration)
        s[past] = pair.longitudinal.value(pair.duration) + v_end * (t[past] - pair.duration)
    s_dot = pair.longitudinal.deriv1(tt)
    jerk_lon = np.where(past, 0.0, pair.longitudinal.deriv3(tt))

    sample = TrajectorySample(index=-1, pair=pair, s=s, d=d, s_dot=s_dot,
                              jerk_lon=jerk_lon)
    if s.min() < -1e-9 or s.max() > frame.length + 1e-9:
        sample.reject_reason = "frame-domain"
        return sample
    kap = np.array([frame.curvature_at(float(si)) for si in s[:: max(1, n // 8)]])
    if np.any(np.abs(d.max() * kap) >= 0.95) or np.any(np.abs(d.min() * kap) >= 0.95):
        sample.reject_reason = "frame-domain"
        return sample

    pos = frame.to_cartesian_many(s, d)
    seg = np.diff(pos, axis=0)
    ds = np.hypot(seg[:, 0], seg[:, 1])
    psi = np.empty(n + 1)
    heading = np.arctan2(seg[:, 1], seg[:, 0])
    # at (near) standstill keep the previous heading
    prev = None
    for k in range(n):
        if ds[k] < 1e-4 and prev is not None:
            heading[k] = prev
        prev = heading[k]
    psi[:-1] = heading
    psi[-1] = psi[-2]
    psi = np.unwrap(psi)
    v = np.empty(n + 1)
    v[:-1] = ds / dt
    v[-1] = v[-2]
    dpsi = np.diff(psi)
    kappa = np.zeros(n + 1)
    safe = ds > 1e-4
    kappa[:-1][safe] = dpsi[safe] / ds[safe]
    kappa[-1] = kappa[-2]
    delta = np.arctan(p.wheelbase * kappa)
    states = np.stack([pos[:, 0], pos[:, 1], delta, v, psi], axis=1)
    inputs = np.stack([np.diff(delta) / dt, np.diff(v) / dt], axis=1)
    sample.cartesian = Trajectory.from_arrays(dt, states, inputs)
    return sample


def _obstacle_track(sc: Scenario, frame: CurvilinearFrame, k0: int, n: int,
                    margin: float = 0.0):
    """Cached per-step obstacle positions, boxes and frame coordinates.

    `margin` inflates the boxes used by the sampling-stage collision filter so
    chosen plans keep a buffer; executed trajectories are still validated
    against the exact extents.
    """
    track = []
    for ob in sc.obstacles:
        entry = {"ob": ob, "pos": np.zeros((n + 1, 2)), "sd": np.full((n + 1, 2), np.nan),
                 "boxes": [],
                 "radius": 0.5 * np.hypot(ob.length + 2 * margin, ob.width + 2 * margin)}
        for k in range(n + 1):
            x, y, psi, _ = ob.state_at(k0 + k)
            entry["pos"][k] = (x, y)
            entry["boxes"].append(
                oriented_box(x, y, psi, ob.length + 2.0 * margin, ob.width + 2.0 * margin)
            )
            try:
                entry["sd"][k] = frame.to_curvilinear((x, y))
            except ProjectionError:
                pass
        track.append(entry)
    return track


def evaluate_samples(samples: list[TrajectorySample], sc: Scenario, p: VehicleParameters,
                     cfg: FrenetConfig, frame: CurvilinearFrame, k_now: int = 0,
                     v_desired: float | None = None,
                     obstacle_track=None) -> list[TrajectorySample]:
    """Filter by limits, collisions and road compliance, then rank by cost."""
    v_des = cfg.v_desired if v_desired is None else v_desired
    kappa_max = np.tan(p.delta_max) / p.wheelbase
    rings = [lanelet.ring for lanelet in sc.network]
    n_steps = max((len(s.cartesian) for s in samples if s.cartesian is not None),
                  default=0)
    if obstacle_track is None:
        obstacle_track = _obstacle_track(sc, frame, k_now, n_steps,
                                         margin=cfg.safety_margin)

    survivors = []
    for sample in samples:
        if sample.cartesian is None:
            sample.feasible = False
            sample.reject_reason = sample.reject_reason or "frame-domain"
            continue
        S = sample.cartesian.states_array()
        dt = sample.cartesian.dt
        v = S[:, 3]
        kappa = np.tan(S[:, 2]) / p.wheelbase
        a = np.diff(v) / dt
        hi = np.array([accel_bounds(vk, p)[1] for vk in v[:-1]])
        if (np.any(np.abs(kappa) > kappa_max * (1 + 1e-9))
                or np.any(v < -1e-9) or np.any(v > p.v_max + 1e-9)
                or np.any(a > hi + 1e-6) or np.any(a < -p.a_max - 1e-6)):
            sample.reject_reason = "kinematics"
            continue
        if not _collision_free(S, p, obstacle_track):
            sample.reject_reason = "collision"
            continue
        if not _road_ok(S, p, rings):
            sample.reject_reason = "road"
            continue
        sample.feasible = True
        sample.cost = _sample_cost(sample, S, p, cfg, frame, obstacle_track, v_des)
        survivors.append(sample)
    survivors.sort(key=lambda s: (s.cost, s.index))
    return survivors


def _collision_free(S: np.ndarray, p: VehicleParameters, obstacle_track) -> bool:
    diag = 0.5 * np.hypot(p.length, p.width)
    for entry in obstacle_track:
        reach = diag + entry["radius"]
        m = min(len(S), len(entry["pos"]))
        dist = np.hypot(S[:m, 0] - entry["pos"][:m, 0], S[:m, 1] - entry["pos"][:m, 1])
        for k in np.nonzero(dist <= reach)[0]:
            ego = oriented_box(S[k, 0], S[k, 1], S[k, 4], p.length, p.width)
            if polygons_intersect(ego, entry["boxes"][k]):
                return False
    return True


def _road_ok(S: np.ndarray, p: VehicleParameters, rings) -> bool:
    c, s = np.cos(S[:, 4]), np.sin(S[:, 4])
    hl, hw = 0.5 * p.length, 0.5 * p.width
    offsets = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw], [0.0, 0.0]])
    px = S[:, None, 0] + offsets[None, :, 0] * c[:, None] - offsets[None, :, 1] * s[:, None]
    py = S[:, None, 1] + offsets[None, :, 0] * s[:, None] + offsets[None, :, 1] * c[:, None]
    pts = np.stack([px.ravel(), py.ravel()], axis=1)
    inside = np.zeros(len(pts), dtype=bool)
    for ring in rings:
        todo = ~inside
        if not todo.any():
            break
        inside[todo] |= points_in_ring(ring, pts[todo])
    return bool(inside.all())


def _sample_cost(sample: TrajectorySample, S: np.ndarray, p: VehicleParameters,
                 cfg: FrenetConfig, frame, obstacle_track, v_des: float) -> float:
    dt = sample.cartesian.dt
    j_jerk = float(np.sum(sample.jerk_lon[:-1] ** 2) * dt)
    j_lat = float(np.sum(sample.d[:-1] ** 2) * dt)
    # the integral part rewards reaching the target speed early; with the
    # terminal term alone, every sample ending at v_des would tie and the
    # jerk term would always pick the laziest ramp
    j_vel = float((sample.s_dot[-1] - v_des) ** 2
                  + 0.25 * np.sum((sample.s_dot[:-1] - v_des) ** 2) * dt)
    j_prox = 0.0
    if obstacle_track:
        n = len(S)
        ego_s, ego_d = sample.s, sample.d
        best = np.zeros(n - 1)
        for entry in obstacle_track:
            sd = entry["sd"]
            m = min(n - 1, len(sd) - 1)
            ok = ~np.isnan(sd[:m, 0])
            in_front = ok & (sd[:m, 0] > ego_s[:m]) & (np.abs(sd[:m, 1] - ego_d[:m]) < 3.5)
            if not in_front.any():
                continue
            gap = np.hypot(entry["pos"][:m, 0] - S[:m, 0], entry["pos"][:m, 1] - S[:m, 1])
            gap = np.maximum(gap - 0.5 * p.length - 0.5 * entry["ob"].length, 0.0)
            val = np.where(in_front, np.exp(-cfg.dist_decay * gap), 0.0)
            best[:m] = np.maximum(best[:m], val)
        j_prox = float(best.sum() * dt)
    return (cfg.w_jerk * j_jerk + cfg.w_lat * j_lat + cfg.w_vel * j_vel
            + cfg.w_dist * j_prox)


def _deadline_check(deadline):
    if deadline is not None and time.perf_counter() > deadline:
        raise TimeoutExceeded("planner budget exhausted")


def _build_samples(fstate: FrenetState, scheme: SamplingScheme, frame, dt, p,
                   horizon: float) -> list[TrajectorySample]:
    samples = []
    for idx, (end, T) in enumerate(sample_terminal_states(fstate, scheme)):
        pair = fit_polynomials(fstate, end, T)
        sample = to_cartesian_sample(pair, frame, dt, p, horizon=horizon)
        sample.index = idx
        samples.append(sample)
    return samples


def plan_step(state: VehicleState, fstate: FrenetState, sc: Scenario,
              frame: CurvilinearFrame, p: VehicleParameters, cfg: FrenetConfig,
              k_now: int = 0, v_desired: float | None = None,
              deadline=None) -> tuple[TrajectorySample, np.ndarray, np.ndarray]:
    """One planning cycle; returns the chosen sample plus its executed rollout.

    The rollout re-simulates the sample's reconstructed inputs through the
    vehicle model from the true current state, so the executed prefix is
    exactly dynamically consistent. Falls back to an emergency braking scheme
    when every sample is rejected.
    """
    _deadline_check(deadline)
    v_des = cfg.v_desired if v_desired is None else v_desired
    v_targets = sorted({max(0.0, frac * v_des) for frac in cfg.v_targets_frac})
    schemes = [SamplingScheme(cfg.d_targets, tuple(v_targets), cfg.t_targets)]
    brake = sorted({0.0, 0.25 * state.v, 0.5 * state.v})
    schemes.append(SamplingScheme(cfg.d_targets, tuple(brake), (1.5, 2.5, 3.5)))

    horizon = max(cfg.t_targets)
    for scheme in schemes:
        samples = _build_samples(fstate, scheme, frame, sc.dt, p, horizon)
        ranked = evaluate_samples(samples, sc, p, cfg, frame, k_now, v_desired=v_des)
        _deadline_check(deadline)
        stride = cfg.replan_stride
        for sample in ranked[: cfg.rollout_candidates]:
            # execute with a closed-loop tracker along the sampled geometry;
            # open-loop replay of the reconstructed inputs would let heading
            # mismatch accumulate into lateral drift across replans
            S = sample.cartesian.states_array()
            inputs = tracking_controller_inputs(S[:, :2], state, sc.dt, p,
                                                v_ref=S[:, 3])
            states = rollout(state, inputs, sc.dt, p)
            if _stride_ok(states[: stride + 1], k_now, sc, p):
                return sample, states, inputs
    raise PlanningFailure("no feasible trajectory sample", step=k_now)


def _stride_ok(states: np.ndarray, k_now: int, sc: Scenario, p: VehicleParameters) -> bool:
    rings = [lanelet.ring for lanelet in sc.network]
    if not _road_ok(states, p, rings):
        return False
    diag = 0.5 * np.hypot(p.length, p.width)
    for k, row in enumerate(states):
        for ob in sc.obstacles:
            x, y, _, _ = ob.state_at(k_now + k)
            if np.hypot(x - row[0], y - row[1]) > diag + 0.5 * np.hypot(ob.length, ob.width):
                continue
            ego = oriented_box(row[0], row[1], row[4], p.length, p.width)
            if polygons_intersect(ego, obstacle_occupancy(ob, k_now + k)):
                return False
    return True


def _measure_frenet(state: VehicleState, frame: CurvilinearFrame,
                    fallback: FrenetState | None = None) -> FrenetState:
    s, d = frame.to_curvilinear((state.x, state.y))
    kappa = frame.curvature_at(s)
    dpsi = wrap_angle(state.psi - frame.heading_at(s))
    denom = max(1.0 - d * kappa, 0.2)
    s_dot = state.v * np.cos(dpsi) / denom
    d_dot = state.v * np.sin(dpsi)
    s_ddot = fallback.s_ddot if fallback is not None else 0.0
    d_ddot = fallback.d_ddot if fallback is not None else 0.0
    return FrenetState(s=float(s), s_dot=float(s_dot), s_ddot=float(s_ddot),
                       d=float(d), d_dot=float(d_dot), d_ddot=float(d_ddot))


def run_receding_horizon(sc: Scenario, p: VehicleParameters,
                         cfg: FrenetConfig | None = None, deadline=None) -> Trajectory:
    """Plan, execute a stride, replan, until the goal window is reached."""
    cfg = cfg or FrenetConfig()
    _, frame = route_reference(sc)
    goal = sc.problem.goal
    t0 = sc.problem.initial_time
    try:
        goal_s = goal_arc_interval(sc, frame)
    except Exception:
        goal_s = None

    state = sc.problem.initial_state
    fstate = _measure_frenet(state, frame)
    executed_states = [state]
    executed_inputs: list[ControlInput] = []
    k = 0
    horizon = min(sc.horizon, goal.t_interval[1])

    if goal_reached(state, t0, goal, sc.network):
        return Trajectory(sc.dt, (state,))

    while k < horizon:
        _deadline_check(deadline)
        v_des = cfg.v_desired
        if goal_s is not None:
            # approaching the goal window: aim for an admissible arrival speed
            dist = goal_s[0] - fstate.s
            brake_room = (max(state.v, 1.0) ** 2 - goal.v_interval[1] ** 2) / (2.0 * 2.5)
            if dist < max(brake_room, 0.0) + 40.0:
                v_des = float(np.clip(cfg.v_desired, goal.v_interval[0],
                                      goal.v_interval[1]))
        sample, ro_states, ro_inputs = plan_step(
            state, fstate, sc, frame, p, cfg, k_now=k, v_desired=v_des,
            deadline=deadline,
        )
        stride = min(cfg.replan_stride, horizon - k, len(ro_inputs))
        done = False
        for j in range(1, stride + 1):
            executed_states.append(VehicleState.from_array(ro_states[j]))
            executed_inputs.append(ControlInput(float(ro_inputs[j - 1, 0]),
                                                float(ro_inputs[j - 1, 1])))
            if goal_reached(executed_states[-1], t0 + k + j, goal, sc.network):
                done = True
                break
        if done:
            return Trajectory(sc.dt, tuple(executed_states), tuple(executed_inputs))
        k += stride
        state = executed_states[-1]
        poly_t = stride * sc.dt
        carry = FrenetState(
            s=0.0, d=0.0,
            s_dot=0.0, d_dot=0.0,
            s_ddot=float(sample.pair.longitudinal.deriv2(min(poly_t, sample.pair.duration))),
            d_ddot=float(sample.pair.lateral.deriv2(min(poly_t, sample.pair.duration))),
        )
        fstate = _measure_frenet(state, frame, fallback=carry)
    raise PlanningFailure("goal not reached within the time window", step=k)
