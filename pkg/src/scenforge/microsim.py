"""Deterministic kinematic micro-simulator on a multi-lane road.

The model is deliberately small: point-mass vehicles in road-aligned
coordinates (arc length s along the centerline, continuous lane index for
the lateral position), advanced on a fixed time grid.  Curved roads share
all longitudinal logic with straight ones; positions are only bent into
world coordinates when distances are measured.

Scripted vehicles follow their statement schedule: a trigger ordinal k means
the action is active during [(k-1) * action_duration, k * action_duration).
Speed-changing actions approach their target at a fixed rate and hold it;
a lane change follows a sinusoidal lateral profile over a fixed duration
and, once started, runs to completion.  While between lane centers a vehicle
occupies both neighboring lanes.

The ego runs a simple time-headway car-following policy and keeps its lane:
it tracks a desired speed, brakes proportionally once the time-to-collision
with its leader drops below the safe headway, and brakes hard below half of
it.  The policy is intentionally imperfect (it only reacts to vehicles that
have already entered its lane), otherwise no scenario would ever be
critical.

Integration is exact for piecewise-constant acceleration: per step
s += v*dt + a*dt^2/2 and v += a*dt, with the speed floored at zero (the stop
inside a step is resolved analytically).  A simulation ends at the horizon
or at the first step where an ego-to-vehicle headway distance falls below
the collision threshold, whichever comes first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .dsl import CONSTRUCTOR, ConcreteTestCase, validate_concrete
from .errors import InvalidTestCase
from .ips import RoadDescriptor, RoadShape, VehicleId


@dataclass(frozen=True)
class RoadModel:
    """Geometry of the road: shape, lane count, lane width, and (for curved
    roads) the centerline radius.  Lane 1 is the rightmost lane; higher lane
    indices are further left, and the curve center sits on the left side."""

    shape: RoadShape
    lane_count: int
    lane_width: float = 5.0
    curve_radius: float = 150.0

    def __post_init__(self):
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")
        if self.shape is RoadShape.CURVED and self.curve_radius <= 50.0:
            raise ValueError("curve_radius must exceed 50 m")

    @classmethod
    def from_descriptor(cls, road: RoadDescriptor, lane_width: float = 5.0,
                        curve_radius: float = 150.0) -> "RoadModel":
        return cls(road.shape, road.lane_count, lane_width, curve_radius)

    def lane_lateral(self, lane: float) -> float:
        """Signed lateral offset (m) of a lane coordinate from the road
        centerline, positive toward the left."""
        return (lane - (self.lane_count + 1) / 2.0) * self.lane_width

    def to_world(self, s: float, lane: float) -> tuple[float, float]:
        lat = self.lane_lateral(lane)
        if self.shape is RoadShape.STRAIGHT:
            return (s, lat)
        r = self.curve_radius - lat
        phi = s / self.curve_radius
        return (r * math.sin(phi), self.curve_radius - r * math.cos(phi))


@dataclass(frozen=True)
class PhysicsConfig:
    max_accel: float = 4.0       # m/s^2
    max_brake: float = 8.0       # m/s^2
    npc_accel_rate: float = 3.0  # m/s^2, scripted speed-up rate
    npc_brake_rate: float = 4.0  # m/s^2, scripted slow-down rate
    lane_change_duration: float = 3.0  # s
    vehicle_length: float = 4.5  # m; doubles as the collision threshold
    action_duration: float = 5.0  # s per trigger slot


@dataclass(frozen=True)
class EgoPolicyConfig:
    desired_speed: float = 15.0      # m/s
    safe_time_headway: float = 2.0   # s
    max_brake: float = 6.0           # m/s^2, policy authority (< physics cap)
    lane_keep: bool = True           # the policy never leaves its lane
    speed_gain: float = 0.5          # 1/s, cruise speed tracking
    comfort_accel: float = 2.0       # m/s^2
    comfort_brake: float = 3.0       # m/s^2


@dataclass(frozen=True)
class VehicleState:
    vehicle: VehicleId
    lane: float   # continuous lane coordinate
    s: float      # arc length along the road, m (vehicle center)
    v: float      # longitudinal speed, m/s
    a: float      # commanded acceleration over the step ahead, m/s^2
    heading: float  # rad relative to the road direction


@dataclass(frozen=True)
class ScheduledAction:
    vehicle: VehicleId
    kind: str
    start: float
    end: float
    stmt_index: int
    target_speed: float
    target_lane: int | None = None


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    npc: VehicleId


@dataclass(frozen=True)
class SimTrace:
    road: RoadModel
    dt: float
    horizon: float
    ego: VehicleId
    vehicle_length: float
    vehicle_order: tuple[VehicleId, ...]
    steps: tuple[tuple[VehicleState, ...], ...]
    actions: tuple[ScheduledAction, ...]
    collision: CollisionEvent | None

    def times(self) -> tuple[float, ...]:
        return tuple(i * self.dt for i in range(len(self.steps)))

    @property
    def duration(self) -> float:
        return (len(self.steps) - 1) * self.dt

    def npc_ids(self) -> tuple[VehicleId, ...]:
        return tuple(v for v in self.vehicle_order if v != self.ego)

    def states_of(self, vehicle: VehicleId) -> tuple[VehicleState, ...]:
        idx = self.vehicle_order.index(vehicle)
        return tuple(row[idx] for row in self.steps)

    def ego_states(self) -> tuple[VehicleState, ...]:
        return self.states_of(self.ego)


def head_xy(road: RoadModel, state: VehicleState, vehicle_length: float) -> tuple[float, float]:
    """World position of the front-bumper midpoint, approximated along the
    road axis (heading tilt during a lane change is ignored)."""
    return road.to_world(state.s + vehicle_length / 2.0, state.lane)


def headway_distance(road: RoadModel, a: VehicleState, b: VehicleState,
                     vehicle_length: float) -> float:
    """Euclidean distance between two front-bumper midpoints in world space."""
    xa, ya = head_xy(road, a, vehicle_length)
    xb, yb = head_xy(road, b, vehicle_length)
    return math.hypot(xa - xb, ya - yb)


def lanes_covered(lane: float) -> tuple[int, ...]:
    """Integer lanes a vehicle occupies: one when near a lane center, both
    neighbors while in between."""
    nearest = round(lane)
    if abs(lane - nearest) <= 0.25:
        return (int(nearest),)
    return (math.floor(lane), math.ceil(lane))


def _lateral_profile(progress: float) -> float:
    """0 -> 1 sinusoidal blend over normalized lane-change progress."""
    return (1.0 - math.cos(math.pi * progress)) / 2.0


def _approach(v: float, target: float, physics: PhysicsConfig, dt: float) -> float:
    """Acceleration that moves v toward target at the scripted rate, landing
    exactly on the target instead of overshooting."""
    if v < target:
        return min(physics.npc_accel_rate, (target - v) / dt)
    if v > target:
        return -min(physics.npc_brake_rate, (v - target) / dt)
    return 0.0


def _advance(s: float, v: float, a: float, dt: float) -> tuple[float, float]:
    """One constant-acceleration step with the speed floored at zero."""
    v_new = v + a * dt
    if v_new < 0.0:
        t_stop = v / -a
        return s + v * t_stop + 0.5 * a * t_stop * t_stop, 0.0
    return s + v * dt + 0.5 * a * dt * dt, v_new


def _ego_accel(ego_s: float, ego_v: float, leader: tuple[float, float] | None,
               cfg: EgoPolicyConfig, physics: PhysicsConfig) -> float:
    cruise = min(max(cfg.speed_gain * (cfg.desired_speed - ego_v), -cfg.comfort_brake),
                 cfg.comfort_accel)
    if leader is None:
        a = cruise
    else:
        leader_s, leader_v = leader
        gap = leader_s - ego_s - physics.vehicle_length
        if gap <= 0.0:
            a = -cfg.max_brake
        else:
            closing = ego_v - leader_v
            if closing <= 0.0:
                a = cruise
            else:
                ttc = gap / closing
                th = cfg.safe_time_headway
                if ttc >= th:
                    a = cruise
                elif ttc <= 0.5 * th:
                    a = -cfg.max_brake
                else:
                    a = -cfg.max_brake * (th - ttc) / (0.5 * th)
    return min(max(a, -physics.max_brake), physics.max_accel)


def _build_schedule(tc: ConcreteTestCase, physics: PhysicsConfig) -> tuple[ScheduledAction, ...]:
    tpl = tc.scenario.template
    schedule = []
    for i, stmt in enumerate(tpl.statements):
        if stmt.kind == CONSTRUCTOR:
            continue
        k = int(tc.value(i, "trigger"))
        start = (k - 1) * physics.action_duration
        target_lane = int(tc.value(i, "lane")) if stmt.kind == "lane_change" else None
        schedule.append(ScheduledAction(
            vehicle=stmt.subject,
            kind=stmt.kind,
            start=start,
            end=start + physics.action_duration,
            stmt_index=i,
            target_speed=float(tc.value(i, "speed")),
            target_lane=target_lane,
        ))
    return tuple(schedule)


def simulate(
    tc: ConcreteTestCase,
    road: RoadModel | None = None,
    ego_cfg: EgoPolicyConfig | None = None,
    physics: PhysicsConfig | None = None,
    horizon: float = 30.0,
    dt: float = 0.1,
    collision_threshold: float | None = None,
) -> SimTrace:
    """Run one concrete test case and return the full trace.

    The case must pass validate_concrete and carry an ego marker; otherwise
    InvalidTestCase is raised.  dt must lie in (0, 0.5].  Two runs over the
    same inputs produce identical traces.
    """
    physics = physics or PhysicsConfig()
    ego_cfg = ego_cfg or EgoPolicyConfig()
    tpl = tc.scenario.template
    if road is None:
        road = RoadModel.from_descriptor(tpl.road)
    if collision_threshold is None:
        collision_threshold = physics.vehicle_length
    if not (0.0 < dt <= 0.5):
        raise ValueError(f"dt {dt} outside (0, 0.5]")
    if horizon < dt:
        raise ValueError("horizon shorter than one step")

    report = validate_concrete(tc, tpl.road, physics.vehicle_length)
    if not report.ok:
        raise InvalidTestCase("; ".join(report.violations))
    if tpl.ego is None:
        raise InvalidTestCase("test case has no ego marker")

    order = tpl.vehicles()
    ego_id = tpl.ego
    schedule = _build_schedule(tc, physics)
    by_vehicle: dict[VehicleId, list[ScheduledAction]] = {v: [] for v in order}
    for act in schedule:
        by_vehicle[act.vehicle].append(act)

    # Mutable per-vehicle kinematic state.
    s: dict[VehicleId, float] = {}
    v: dict[VehicleId, float] = {}
    base_lane: dict[VehicleId, float] = {}
    for i, stmt in enumerate(tpl.statements):
        if stmt.kind == CONSTRUCTOR:
            base_lane[stmt.subject] = float(int(tc.value(i, "lane")))
            s[stmt.subject] = float(tc.value(i, "offset"))
            v[stmt.subject] = float(tc.value(i, "speed"))

    # Active lane-change context per vehicle: (action, lane at start).
    lc_ctx: dict[VehicleId, tuple[ScheduledAction, float]] = {}

    def lateral_at(vid: VehicleId, t: float) -> tuple[float, float]:
        """Lane coordinate and lateral rate (lane units / s) at time t."""
        ctx = lc_ctx.get(vid)
        if ctx is None:
            return base_lane[vid], 0.0
        act, lane0 = ctx
        tau = t - act.start
        duration = physics.lane_change_duration
        if tau >= duration:
            return float(act.target_lane), 0.0
        u = tau / duration
        lane = lane0 + (act.target_lane - lane0) * _lateral_profile(u)
        rate = (act.target_lane - lane0) * math.pi / (2.0 * duration) * math.sin(math.pi * u)
        return lane, rate

    def active_action(vid: VehicleId, t: float) -> ScheduledAction | None:
        current = None
        for act in by_vehicle[vid]:
            if act.start <= t < act.end:
                current = act  # later statements win on overlap
        return current

    n_steps = int(round(horizon / dt))
    steps: list[tuple[VehicleState, ...]] = []
    collision: CollisionEvent | None = None
    ego_lane = base_lane[ego_id]

    for i in range(n_steps + 1):
        t = i * dt

        # Scripted lateral state and acceleration commands.
        lanes: dict[VehicleId, float] = {}
        rates: dict[VehicleId, float] = {}
        accel: dict[VehicleId, float] = {}
        for vid in order:
            if vid == ego_id:
                lanes[vid], rates[vid] = ego_lane, 0.0
                continue
            act = active_action(vid, t)
            if act is not None and act.kind == "lane_change":
                ctx = lc_ctx.get(vid)
                if ctx is None or ctx[0].stmt_index != act.stmt_index:
                    lane_now, _ = lateral_at(vid, t)
                    lc_ctx[vid] = (act, lane_now)
            lanes[vid], rates[vid] = lateral_at(vid, t)
            if act is None:
                accel[vid] = 0.0
            else:
                a = _approach(v[vid], act.target_speed, physics, dt)
                accel[vid] = min(max(a, -physics.max_brake), physics.max_accel)

        # Ego command from the current snapshot.
        leader = None
        ego_int_lane = int(round(ego_lane))
        for vid in order:
            if vid == ego_id or s[vid] <= s[ego_id]:
                continue
            if ego_int_lane in lanes_covered(lanes[vid]):
                if leader is None or s[vid] < leader[0]:
                    leader = (s[vid], v[vid])
        accel[ego_id] = _ego_accel(s[ego_id], v[ego_id], leader, ego_cfg, physics)

        row = tuple(
            VehicleState(
                vehicle=vid,
                lane=lanes[vid],
                s=s[vid],
                v=v[vid],
                a=accel[vid],
                heading=math.atan2(rates[vid] * road.lane_width, max(v[vid], 0.1)),
            )
            for vid in order
        )
        steps.append(row)

        # Collision scan: ego against every scripted vehicle.
        ego_state = row[order.index(ego_id)]
        hit = None
        for state in row:
            if state.vehicle == ego_id:
                continue
            d = headway_distance(road, ego_state, state, physics.vehicle_length)
            if d < collision_threshold and (hit is None or d < hit[0]):
                hit = (d, state.vehicle)
        if hit is not None:
            collision = CollisionEvent(t, hit[1])
            break

        for vid in order:
            s[vid], v[vid] = _advance(s[vid], v[vid], accel[vid], dt)

    return SimTrace(
        road=road,
        dt=dt,
        horizon=horizon,
        ego=ego_id,
        vehicle_length=physics.vehicle_length,
        vehicle_order=order,
        steps=tuple(steps),
        actions=schedule,
        collision=collision,
    )


def detect_collision(trace: SimTrace, threshold: float) -> CollisionEvent | None:
    """First step where some ego-to-vehicle headway distance drops below the
    threshold, or None.  Agrees with the minimum headway distance: a trace
    has an event iff that minimum is below the threshold."""
    ego_idx = trace.vehicle_order.index(trace.ego)
    for i, row in enumerate(trace.steps):
        ego_state = row[ego_idx]
        hit = None
        for state in row:
            if state.vehicle == trace.ego:
                continue
            d = headway_distance(trace.road, ego_state, state, trace.vehicle_length)
            if d < threshold and (hit is None or d < hit[0]):
                hit = (d, state.vehicle)
        if hit is not None:
            return CollisionEvent(i * trace.dt, hit[1])
    return None


def trace_to_csv(trace: SimTrace) -> str:
    lines = ["t,id,lane,s,v,a"]
    for i, row in enumerate(trace.steps):
        t = i * trace.dt
        for state in row:
            lines.append(
                f"{t:.3f},{state.vehicle},{state.lane:.6f},{state.s:.6f},"
                f"{state.v:.6f},{state.a:.6f}"
            )
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: SimTrace, path) -> None:
    Path(path).write_text(trace_to_csv(trace))


def trace_to_json(trace: SimTrace) -> dict:
    return {
        "dt": trace.dt,
        "horizon": trace.horizon,
        "ego": str(trace.ego),
        "vehicles": [str(v) for v in trace.vehicle_order],
        "collision": (
            {"time": trace.collision.time, "npc": str(trace.collision.npc)}
            if trace.collision else None
        ),
        "steps": [
            {
                "t": i * trace.dt,
                "states": [
                    {"id": str(st.vehicle), "lane": st.lane, "s": st.s, "v": st.v, "a": st.a}
                    for st in row
                ],
            }
            for i, row in enumerate(trace.steps)
        ],
    }


def write_trace_json(trace: SimTrace, path) -> None:
    Path(path).write_text(json.dumps(trace_to_json(trace), indent=2) + "\n")
