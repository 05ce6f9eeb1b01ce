"""Deterministic fixed-step mission simulation with record/replay.

One tick runs the pipeline in a fixed order: safety check, command
translation, locomotion, arm integration, gripper action, stability,
sensor sampling, stub detection, mission-goal evaluation, telemetry
assembly. Locomotion includes the terrain conformation pass (see
chassis.step_locomotion), so the settled pose feeds every later stage.

Every tick appends exactly one entry to the TickLog and exactly one
DetectionRecord to the detection log. Given the same scenario, seed and
command stream, the serialized TickLog is byte-for-byte reproducible;
replay() enforces that and reports the first divergent tick.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .arm import JointState, forward_kinematics
from .chassis import (ActuatorSetpoints, ChassisConfig, ChassisState,
                      attitude_matrix, compute_stability, check_climbable,
                      flipper_edge_points, passive_conform, rear_corners_body,
                      step_locomotion)
from .detection import DetectionRecord
from .protocol import (CommandMessage, DEFAULT_TIMEOUT_MS, Heartbeat,
                       PoseSummary, StabilitySummary, TelemetryMessage,
                       decode, encode, safe_stop_check, translate)
from .scenario import Scenario
from .sensors import FRONT_SONAR_MOUNT, make_sensor_frame
from .terrain import TerrainBoundsError, height_at, raycast

DETECT_RANGE = 3.0           # m
GRASP_EPSILON = 0.05         # m, gripper reach point to object center
ARM_RATE_DEG_S = 60.0        # joint slew limit
MARGIN_WIRE_FLOOR = -1.0     # stability margin clamp for serialization
_OCCLUSION_TOL = 0.05        # m, keeps surface-resting objects visible

FAIL_TIP_OVER = "tip-over"
FAIL_OUT_OF_BOUNDS = "out-of-bounds"
FAIL_CLIMB_LIMIT = "climb-limit"
FAIL_GOALS_UNMET = "goals-unmet"


class ReplayMismatchError(Exception):
    """Replay produced a different log; `tick` is the first divergence."""

    def __init__(self, tick: int, message: str):
        super().__init__(message)
        self.tick = tick


class CommandStreamError(Exception):
    """Recorded command stream is malformed."""


@dataclass(frozen=True)
class WorldState:
    """Complete simulation state after some number of ticks."""

    tick: int
    chassis: ChassisState
    arm: JointState
    gripper: str = "open"                    # open | closed
    held_object: str | None = None
    mission_index: int = 0
    safe_stop: bool = False
    status: str = "running"                  # running | success | fail
    fail_reason: str | None = None
    last_command: CommandMessage | None = None
    last_command_tick: int = -1
    object_positions: tuple = ()             # (id, (x, y, z)) overrides
    sensors: object = None                   # latest SensorFrame
    stability: object = None                 # latest StabilityReport

    def __post_init__(self):
        if self.tick < 0 or self.mission_index < 0:
            raise ValueError("tick and mission index must be >= 0")
        if self.gripper not in ("open", "closed"):
            raise ValueError(f"gripper state must be open or closed, got {self.gripper!r}")
        if self.held_object is not None and self.gripper != "closed":
            raise ValueError("a held object implies a closed gripper")
        if self.status not in ("running", "success", "fail"):
            raise ValueError(f"bad status {self.status!r}")
        if (self.fail_reason is not None) != (self.status == "fail"):
            raise ValueError("fail_reason must accompany exactly the fail status")


@dataclass
class TickLog:
    """Append-only run record; entries are plain JSON-ready dicts."""

    seed: int
    tick_rate: float
    timeout_ms: int
    entries: list

    def header(self) -> str:
        return f"ticklog v1 {self.seed} {float(self.tick_rate)!r} {self.timeout_ms}"

    def to_bytes(self) -> bytes:
        lines = [self.header()]
        lines += [_dump_entry(e) for e in self.entries]
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "TickLog":
        lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty tick log")
        head = lines[0].split()
        if len(head) != 5 or head[0] != "ticklog" or head[1] != "v1":
            raise ValueError(f"bad tick log header: {lines[0]!r}")
        seed, rate, timeout = int(head[2]), float(head[3]), int(head[4])
        entries = []
        for i, ln in enumerate(lines[1:]):
            try:
                e = json.loads(ln)
            except json.JSONDecodeError as exc:
                raise ValueError(f"bad tick log line {i}: {exc}") from exc
            if e.get("tick") != i:
                raise ValueError(f"ticks must be contiguous from 0, line {i} has {e.get('tick')}")
            entries.append(e)
        return cls(seed=seed, tick_rate=rate, timeout_ms=timeout, entries=entries)


@dataclass(frozen=True)
class MissionResult:
    outcome: str                 # success | fail
    reason: str | None
    tick: int                    # tick at which the outcome was decided
    log: TickLog
    detections: list             # DetectionRecords, one per tick


def _dump_entry(entry: dict) -> str:
    return json.dumps(entry, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _wire_margin(margin: float) -> float:
    if not math.isfinite(margin):
        return MARGIN_WIRE_FLOOR
    return max(float(margin), MARGIN_WIRE_FLOOR)


def gripper_point(world: WorldState, terrain, config: ChassisConfig) -> np.ndarray:
    """World position of the gripper reach point for the current pose."""
    st = world.chassis
    base_z = height_at(terrain, st.position[0], st.position[1])
    R = attitude_matrix(st.heading, st.pitch, st.roll)
    fk = forward_kinematics(config.arm, world.arm)
    w = R @ (np.asarray(config.arm_mount) + fk.position)
    return np.array([st.position[0] + w[0], st.position[1] + w[1], base_z + w[2]])


def object_position(world: WorldState, scenario: Scenario, object_id: str):
    for oid, pos in world.object_positions:
        if oid == object_id:
            return pos
    return scenario.object_by_id(object_id).position


def stub_detect(world: WorldState, scenario: Scenario, terrain,
                config: ChassisConfig, latency_ms: float):
    """Proximity detector standing in for the vision model.

    An object is detected iff it lies within DETECT_RANGE of the sensor
    mount, in the forward half-plane, and the ray to it clears the
    terrain. Confidence falls linearly with distance. Returns the
    detection list plus one DetectionRecord whose ground truth is the
    nearest in-range object (occluded or not); a held object rides in
    the gripper and is excluded entirely.
    """
    st = world.chassis
    base_z = height_at(terrain, st.position[0], st.position[1])
    R = attitude_matrix(st.heading, st.pitch, st.roll)
    origin = np.array([st.position[0], st.position[1], base_z]) + R @ np.asarray(FRONT_SONAR_MOUNT)
    fwd_xy = (R @ np.array([1.0, 0.0, 0.0]))[:2]

    in_range = []                # (distance, label)  ground-truth candidates
    visible = []                 # (distance, label)  detections
    for obj in scenario.objects:
        if obj.object_id == world.held_object:
            continue
        pos = np.asarray(object_position(world, scenario, obj.object_id))
        rel = pos - origin
        d = float(np.linalg.norm(rel))
        ahead = float(fwd_xy @ (pos[:2] - np.asarray(st.position))) > 0.0
        if d > DETECT_RANGE or not ahead:
            continue
        in_range.append((d, obj.label))
        if d > 1e-9:
            hit = raycast(terrain, origin, rel / d, max_range=d)
            if hit is not None and hit < d - _OCCLUSION_TOL:
                continue
        visible.append((d, obj.label))

    in_range.sort()
    visible.sort()
    detections = [(label, max(0.0, 1.0 - d / DETECT_RANGE)) for d, label in visible]
    record = DetectionRecord(
        frame_id=world.tick,
        ground_truth=in_range[0][1] if in_range else None,
        prediction=visible[0][1] if visible else None,
        latency_ms=latency_ms,
    )
    return detections, record


def _front_x(st: ChassisState, config: ChassisConfig) -> float:
    """Furthest +x extent of the footprint, flipper included."""
    R = attitude_matrix(st.heading, st.pitch, st.roll)
    pts = np.vstack([rear_corners_body(config),
                     flipper_edge_points(config, st.flipper_angle)])
    return float(((R @ pts.T).T[:, 0] + st.position[0]).max())


def _goal_met(goal, world: WorldState, scenario: Scenario, detections) -> bool:
    x, y = world.chassis.position
    if goal.kind == "reach":
        return math.hypot(x - goal.x, y - goal.y) <= goal.radius
    if goal.kind == "detect":
        return any(label == goal.target for label, _ in detections)
    if goal.kind == "grasp":
        return world.held_object == goal.target
    return math.hypot(x - scenario.start[0], y - scenario.start[1]) <= goal.radius


def mission_status_text(world: WorldState, scenario: Scenario) -> str:
    if world.status == "success":
        return "success"
    if world.status == "fail":
        return f"fail:{world.fail_reason}"
    goals = scenario.goals
    if world.mission_index >= len(goals):
        return "success"
    g = goals[world.mission_index]
    return f"goal {world.mission_index + 1}/{len(goals)}: {g.describe()}"


class Simulation:
    """Owns one run: scenario, RNG stream, world state and the tick log."""

    def __init__(self, scenario: Scenario, seed: int | None = None,
                 timeout_ms: int = DEFAULT_TIMEOUT_MS):
        if timeout_ms <= 0:
            raise ValueError("timeout must be > 0")
        self.scenario = scenario
        self.terrain = scenario.build_terrain()
        self.config = scenario.build_config()
        self.seed = scenario.seed if seed is None else int(seed)
        self.timeout_ms = int(timeout_ms)
        self.rng = np.random.default_rng(self.seed)
        self.dt = 1.0 / scenario.tick_rate
        self.feature = scenario.feature()
        self.log = TickLog(seed=self.seed, tick_rate=scenario.tick_rate,
                           timeout_ms=self.timeout_ms, entries=[])
        self.detections: list[DetectionRecord] = []

        start = passive_conform(
            ChassisState(position=(scenario.start[0], scenario.start[1]),
                         heading=scenario.start[2], payload_mass=scenario.payload),
            self.terrain, self.config)
        self.world = WorldState(tick=0, chassis=start, arm=JointState((0.0,) * 6))

    # -- one tick ----------------------------------------------------

    def step(self, cmd: CommandMessage | None = None) -> dict:
        """Advance one tick; returns the appended log entry."""
        w = self.world
        n = w.tick
        was_terminal = w.status != "running"
        fault: str | None = None

        # Safety: a command refreshes the link; silence beyond the
        # timeout forces the safe stop. The timer only runs once a
        # first command has arrived.
        last_command, last_tick = w.last_command, w.last_command_tick
        safe_stop = w.safe_stop
        if not was_terminal:
            if cmd is not None:
                last_command, last_tick = cmd, n
            if last_command is None:
                safe_stop = False
            else:
                age_ms = (n - last_tick) * 1000.0 * self.dt
                safe_stop = safe_stop_check(age_ms, self.timeout_ms) == "safe_stop"

        if was_terminal or safe_stop or last_command is None:
            sp = ActuatorSetpoints(arm_joint_targets=w.arm.angles)
        else:
            sp = translate(last_command, w.chassis, w.arm, self.config)

        chassis, arm = w.chassis, w.arm
        gripper, held = w.gripper, w.held_object
        overlay = dict(w.object_positions)

        if not was_terminal:
            # Locomotion (includes terrain conformation). Driving the
            # footprint off the grid is a mission-halting fault: the
            # pose holds its last legal value.
            vmax = self.config.v_max
            wants_motion = (min(max(sp.track_left, -vmax), vmax),
                            min(max(sp.track_right, -vmax), vmax)) != (0.0, 0.0)
            try:
                chassis = step_locomotion(w.chassis, sp, self.terrain, self.dt,
                                          self.config)
                halted = wants_motion and chassis.track_speed_left == 0.0 \
                    and chassis.track_speed_right == 0.0
            except TerrainBoundsError:
                chassis = replace(w.chassis, track_speed_left=0.0,
                                  track_speed_right=0.0)
                halted = True
            if halted:
                fault = FAIL_OUT_OF_BOUNDS

            # Arm slews toward its targets at a bounded rate.
            limit = ARM_RATE_DEG_S * self.dt
            angles, vels = [], []
            for a, target in zip(w.arm.angles, sp.arm_joint_targets):
                d = min(max(target - a, -limit), limit)
                angles.append(a + d)
                vels.append(d / self.dt)
            arm = JointState(tuple(angles), tuple(vels))

            # Gripper action and grasp bookkeeping.
            posed = replace(w, chassis=chassis, arm=arm)
            if sp.gripper == "open":
                if held is not None:
                    overlay[held] = tuple(float(v) for v in gripper_point(
                        posed, self.terrain, self.config))
                    held = None
                gripper = "open"
            elif sp.gripper == "close":
                gripper = "closed"
                if held is None:
                    gp = gripper_point(posed, self.terrain, self.config)
                    best, best_d = None, GRASP_EPSILON
                    for obj in self.scenario.objects:
                        if not obj.graspable:
                            continue
                        pos = object_position(posed, self.scenario, obj.object_id)
                        d = float(np.linalg.norm(np.asarray(pos) - gp))
                        if d <= best_d:
                            best, best_d = obj.object_id, d
                    held = best
            if held is not None:
                overlay[held] = tuple(float(v) for v in gripper_point(
                    posed, self.terrain, self.config))

        stability = compute_stability(chassis, self.config, self.terrain, arm)
        if not was_terminal and fault is None and stability.tipped:
            fault = FAIL_TIP_OVER

        noisy = self.scenario.noise_std > 0.0
        sensors = make_sensor_frame(
            n, chassis, self.terrain, self.scenario.environment,
            declination=self.scenario.declination,
            rng=self.rng if noisy else None,
            noise_std=self.scenario.noise_std)

        latency = float(20.0 + 30.0 * self.rng.random())
        world_for_detect = replace(
            w, chassis=chassis, arm=arm, gripper=gripper, held_object=held,
            object_positions=tuple(sorted(overlay.items())))
        detections, record = stub_detect(world_for_detect, self.scenario,
                                         self.terrain, self.config, latency)
        self.detections.append(record)

        # Mission logic: the climb gate fires when the footprint first
        # crosses the feature base; goals then advance in order.
        status, fail_reason = w.status, w.fail_reason
        index = w.mission_index
        if not was_terminal:
            if fault is None and self.feature is not None:
                prev_front = _front_x(w.chassis, self.config)
                new_front = _front_x(chassis, self.config)
                if prev_front < self.feature.x_start <= new_front:
                    if not check_climbable(min(self.feature.slope_deg, 90.0),
                                           self.config.flipper_max,
                                           chassis.payload_mass, self.config):
                        fault = FAIL_CLIMB_LIMIT
            if fault is not None:
                status, fail_reason = "fail", fault
            else:
                goals = self.scenario.goals
                while index < len(goals) and _goal_met(
                        goals[index], world_for_detect, self.scenario, detections):
                    index += 1
                if index >= len(goals):
                    status = "success"

        self.world = WorldState(
            tick=n + 1, chassis=chassis, arm=arm, gripper=gripper,
            held_object=held, mission_index=index, safe_stop=safe_stop,
            status=status, fail_reason=fail_reason,
            last_command=last_command, last_command_tick=last_tick,
            object_positions=tuple(sorted(overlay.items())),
            sensors=sensors, stability=stability)

        telemetry = self._telemetry(n, detections)
        entry = {
            "command": None if cmd is None else json.loads(encode(cmd)),
            "telemetry": json.loads(encode(telemetry)),
            "tick": n,
            "world": self._world_summary(),
        }
        self.log.entries.append(entry)
        return entry

    # -- views ---------------------------------------------------------

    def _telemetry(self, tick: int, detections) -> TelemetryMessage:
        w = self.world
        st = w.chassis
        return TelemetryMessage(
            seq=tick, tick=tick,
            chassis=PoseSummary(x=st.position[0], y=st.position[1],
                                heading=st.heading, pitch=st.pitch, roll=st.roll,
                                flipper_angle=st.flipper_angle),
            stability=StabilitySummary(margin=_wire_margin(w.stability.margin),
                                       tipped=w.stability.tipped),
            sensors=w.sensors,
            detections=tuple(detections),
            mission_status=mission_status_text(w, self.scenario),
        )

    def _world_summary(self) -> dict:
        w = self.world
        st = w.chassis
        return {
            "arm": [float(a) for a in w.arm.angles],
            "flipper": float(st.flipper_angle),
            "gripper": w.gripper,
            "heading": float(st.heading),
            "held": w.held_object,
            "margin": _wire_margin(w.stability.margin),
            "mission_index": w.mission_index,
            "pitch": float(st.pitch),
            "position": [float(st.position[0]), float(st.position[1])],
            "roll": float(st.roll),
            "safe_stop": bool(w.safe_stop),
            "status": w.status if w.status != "fail" else f"fail:{w.fail_reason}",
            "tracks": [float(st.track_speed_left), float(st.track_speed_right)],
        }


# -- recorded command streams ------------------------------------------


def parse_command_stream(text: str):
    """`cmdstream v1` file: one `<tick> <frame-json>` line per frame.

    Heartbeats are legal in a recording but carry no actuator effect,
    so they are dropped here; any other frame type is an error.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["cmdstream", "v1"]:
        head = lines[0] if lines else ""
        raise CommandStreamError(f"bad command stream header: {head!r}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(None, 1)
        if len(parts) != 2:
            raise CommandStreamError(f"bad command stream line: {ln!r}")
        try:
            tick = int(parts[0])
            frame = decode(parts[1])
        except Exception as exc:
            raise CommandStreamError(f"bad command stream line: {ln!r}: {exc}") from exc
        if tick < 0:
            raise CommandStreamError(f"negative tick in command stream: {ln!r}")
        if isinstance(frame, CommandMessage):
            out.append((tick, frame))
        elif not isinstance(frame, Heartbeat):
            raise CommandStreamError(f"frame type not allowed in command stream: {ln!r}")
    return out


def format_command_stream(pairs) -> str:
    lines = ["cmdstream v1"]
    for tick, cmd in pairs:
        lines.append(f"{tick} " + encode(cmd).decode("utf-8").strip())
    return "\n".join(lines) + "\n"


# -- mission harness -----------------------------------------------------


def run_mission(scenario: Scenario, commands=(), seed: int | None = None,
                timeout_ms: int = DEFAULT_TIMEOUT_MS,
                max_ticks: int | None = None) -> MissionResult:
    """Run the scenario against a recorded command stream.

    `commands` is a sequence of (tick, CommandMessage); the latest
    command per tick wins. The run ends at the first terminal status or
    shortly after the stream runs dry (one safety timeout past the last
    command), whichever comes first; an unmet goal list at that point is
    the goals-unmet failure.
    """
    sim = Simulation(scenario, seed=seed, timeout_ms=timeout_ms)
    cmd_map: dict[int, CommandMessage] = {}
    for tick, cmd in commands:
        if tick < 0:
            raise ValueError("command ticks must be >= 0")
        cmd_map[int(tick)] = cmd

    drain = int(timeout_ms / (1000.0 * sim.dt)) + 2
    end = (max(cmd_map) + 1 + drain) if cmd_map else 1
    if max_ticks is not None:
        end = min(end, max_ticks)

    while sim.world.tick < end and sim.world.status == "running":
        sim.step(cmd_map.get(sim.world.tick))

    w = sim.world
    last = w.tick - 1
    if w.status == "success":
        return MissionResult("success", None, last, sim.log, sim.detections)
    reason = w.fail_reason if w.status == "fail" else FAIL_GOALS_UNMET
    return MissionResult("fail", reason, last, sim.log, sim.detections)


def commands_from_log(log: TickLog):
    """Recover the recorded (tick, CommandMessage) stream from a log."""
    out = []
    for e in log.entries:
        c = e.get("command")
        if c:
            out.append((e["tick"], CommandMessage(
                seq=c["seq"], timestamp_ms=c["timestamp_ms"],
                channels=tuple(c["channels"]))))
    return out


def replay(log: TickLog, scenario: Scenario) -> TickLog:
    """Re-run a recorded log; byte-identical or ReplayMismatchError.

    The recorded seed and timeout are used, so a log replays faithfully
    even when the original run overrode the scenario seed. A truncated
    log replays exactly as many ticks as it holds.
    """
    if float(log.tick_rate) != float(scenario.tick_rate):
        raise ReplayMismatchError(
            -1, f"log tick rate {log.tick_rate} does not match scenario "
                f"{scenario.tick_rate}")
    sim = Simulation(scenario, seed=log.seed, timeout_ms=log.timeout_ms)
    cmd_map = dict((t, c) for t, c in commands_from_log(log))
    for i, expected in enumerate(log.entries):
        got = sim.step(cmd_map.get(i))
        if _dump_entry(got) != _dump_entry(expected):
            raise ReplayMismatchError(
                i, f"replay diverged at tick {i}")
    return sim.log
