"""Station-robot wire protocol: newline-delimited JSON v1 frames.

One message per line, each self-describing through a `type` field and a
`v` version tag. The codec is a strict identity: decode(encode(m)) == m
field for field, so recorded streams diff cleanly and replays are exact.
Also houses the 6-channel command mixer and the link-loss safe-stop rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .arm import JointState, clamp_to_limits
from .chassis import DEFAULT_CONFIG, ActuatorSetpoints, ChassisConfig, ChassisState
from .sensors import SensorFrame

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 500
DEFAULT_TELEMETRY_HZ = 10.0
FLIPPER_RATE_MAX = 30.0      # deg/s at full channel deflection
ARM_TARGET_STEP_DEG = 30.0   # target offset at full channel deflection


class FrameParseError(Exception):
    """Malformed frame; carries the offending line."""

    def __init__(self, message: str, line: str):
        super().__init__(f"{message}: {line!r}")
        self.line = line


class UnknownTypeError(FrameParseError):
    """Well-formed frame of a type this protocol version does not know."""


@dataclass(frozen=True)
class CommandMessage:
    seq: int
    timestamp_ms: int
    channels: tuple[float, ...]

    def __post_init__(self):
        if self.seq < 0 or not isinstance(self.seq, int):
            raise ValueError(f"seq must be a non-negative integer, got {self.seq!r}")
        if not isinstance(self.timestamp_ms, int):
            raise ValueError("timestamp_ms must be an integer")
        ch = tuple(float(c) for c in self.channels)
        if len(ch) != 6:
            raise ValueError(f"exactly 6 channels required, got {len(ch)}")
        if any(not -1.0 <= c <= 1.0 for c in ch):
            raise ValueError(f"channels must be within [-1, 1], got {ch}")
        object.__setattr__(self, "channels", ch)


@dataclass(frozen=True)
class Heartbeat:
    seq: int
    timestamp_ms: int

    def __post_init__(self):
        if self.seq < 0 or not isinstance(self.seq, int):
            raise ValueError("seq must be a non-negative integer")
        if not isinstance(self.timestamp_ms, int):
            raise ValueError("timestamp_ms must be an integer")


@dataclass(frozen=True)
class PoseSummary:
    x: float
    y: float
    heading: float
    pitch: float
    roll: float
    flipper_angle: float

    def __post_init__(self):
        for name in ("x", "y", "heading", "pitch", "roll", "flipper_angle"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"pose field {name} must be finite")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class StabilitySummary:
    margin: float
    tipped: bool

    def __post_init__(self):
        if not math.isfinite(self.margin):
            raise ValueError("wire margin must be finite (clamp before building)")
        object.__setattr__(self, "margin", float(self.margin))
        object.__setattr__(self, "tipped", bool(self.tipped))


@dataclass(frozen=True)
class TelemetryMessage:
    seq: int
    tick: int
    chassis: PoseSummary
    stability: StabilitySummary
    sensors: SensorFrame
    detections: tuple[tuple[str, float], ...]
    mission_status: str

    def __post_init__(self):
        if self.seq < 0 or not isinstance(self.seq, int):
            raise ValueError("seq must be a non-negative integer")
        if self.tick < 0 or not isinstance(self.tick, int):
            raise ValueError("tick must be a non-negative integer")
        dets = tuple((str(label), float(conf)) for label, conf in self.detections)
        if any(not math.isfinite(c) for _, c in dets):
            raise ValueError("detection confidences must be finite")
        object.__setattr__(self, "detections", dets)


@dataclass(frozen=True)
class AuthorityNotice:
    """Sent once on connect: whether this session may drive."""

    role: str  # authoritative | observer

    def __post_init__(self):
        if self.role not in ("authoritative", "observer"):
            raise ValueError(f"role must be authoritative or observer, got {self.role!r}")


@dataclass(frozen=True)
class CommandRejected:
    """Acknowledges and refuses a command from a non-authoritative sender."""

    seq: int
    reason: str


def _sensor_dict(s: SensorFrame) -> dict:
    return {"tick": s.tick, "ultrasonic_m": s.ultrasonic_m,
            "temperature_c": s.temperature_c, "humidity_pct": s.humidity_pct,
            "gas_ppm": s.gas_ppm, "heading_deg": s.heading_deg}


def encode(msg) -> bytes:
    """One newline-terminated JSON frame tagged with type and version."""
    if isinstance(msg, CommandMessage):
        body = {"type": "command", "seq": msg.seq, "timestamp_ms": msg.timestamp_ms,
                "channels": list(msg.channels)}
    elif isinstance(msg, Heartbeat):
        body = {"type": "heartbeat", "seq": msg.seq, "timestamp_ms": msg.timestamp_ms}
    elif isinstance(msg, TelemetryMessage):
        c = msg.chassis
        body = {"type": "telemetry", "seq": msg.seq, "tick": msg.tick,
                "chassis": {"x": c.x, "y": c.y, "heading": c.heading,
                            "pitch": c.pitch, "roll": c.roll,
                            "flipper_angle": c.flipper_angle},
                "stability": {"margin": msg.stability.margin,
                              "tipped": msg.stability.tipped},
                "sensors": _sensor_dict(msg.sensors),
                "detections": [[label, conf] for label, conf in msg.detections],
                "mission_status": msg.mission_status}
    elif isinstance(msg, AuthorityNotice):
        body = {"type": "authority", "role": msg.role}
    elif isinstance(msg, CommandRejected):
        body = {"type": "rejected", "seq": msg.seq, "reason": msg.reason}
    else:
        raise TypeError(f"not a protocol message: {type(msg).__name__}")
    body["v"] = PROTOCOL_VERSION
    return (json.dumps(body, sort_keys=True, allow_nan=False,
                       separators=(",", ":")) + "\n").encode("utf-8")


def decode(frame):
    """Parse one frame (bytes or str, one line) back into its message."""
    line = frame.decode("utf-8") if isinstance(frame, (bytes, bytearray)) else frame
    line = line.strip("\r\n")
    if not line.strip():
        raise FrameParseError("empty frame", line)
    try:
        body = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameParseError(f"invalid JSON ({exc.msg})", line) from exc
    if not isinstance(body, dict):
        raise FrameParseError("frame must be a JSON object", line)
    if body.get("v") != PROTOCOL_VERSION:
        raise FrameParseError(f"unsupported protocol version {body.get('v')!r}", line)
    kind = body.get("type")
    try:
        if kind == "command":
            return CommandMessage(seq=body["seq"], timestamp_ms=body["timestamp_ms"],
                                  channels=tuple(body["channels"]))
        if kind == "heartbeat":
            return Heartbeat(seq=body["seq"], timestamp_ms=body["timestamp_ms"])
        if kind == "telemetry":
            ch, stab, sens = body["chassis"], body["stability"], body["sensors"]
            return TelemetryMessage(
                seq=body["seq"], tick=body["tick"],
                chassis=PoseSummary(x=ch["x"], y=ch["y"], heading=ch["heading"],
                                    pitch=ch["pitch"], roll=ch["roll"],
                                    flipper_angle=ch["flipper_angle"]),
                stability=StabilitySummary(margin=stab["margin"],
                                           tipped=stab["tipped"]),
                sensors=SensorFrame(tick=sens["tick"],
                                    ultrasonic_m=sens["ultrasonic_m"],
                                    temperature_c=sens["temperature_c"],
                                    humidity_pct=sens["humidity_pct"],
                                    gas_ppm=sens["gas_ppm"],
                                    heading_deg=sens["heading_deg"]),
                detections=tuple((d[0], d[1]) for d in body["detections"]),
                mission_status=str(body["mission_status"]))
        if kind == "authority":
            return AuthorityNotice(role=body["role"])
        if kind == "rejected":
            return CommandRejected(seq=body["seq"], reason=str(body["reason"]))
    except UnknownTypeError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FrameParseError(f"bad {kind} frame ({exc})", line) from exc
    raise UnknownTypeError(f"unknown message type {kind!r}", line)


def _clamp(v: float) -> float:
    return min(1.0, max(-1.0, v))


def translate(cmd: CommandMessage, current: ChassisState, arm: JointState,
              config: ChassisConfig = DEFAULT_CONFIG) -> ActuatorSetpoints:
    """Mix the 6 operator channels into actuator setpoints.

    ch1 throttle and ch2 steer blend into track speeds; ch3 drives the
    flipper rate; ch4 picks one arm joint (six buckets across the stick
    throw); ch5 offsets that joint's target (clamped to its limits); ch6
    closes past +0.5, opens past -0.5, holds in the deadband between.
    """
    ch = cmd.channels
    left = config.v_max * _clamp(ch[0] + ch[1])
    right = config.v_max * _clamp(ch[0] - ch[1])
    flipper_rate = ch[2] * FLIPPER_RATE_MAX

    joint = min(5, int((ch[3] + 1.0) * 3.0))  # six equal buckets over [-1, 1]
    targets = list(arm.angles)
    targets[joint] += ch[4] * ARM_TARGET_STEP_DEG
    targets = [float(t) for t in clamp_to_limits(config.arm, targets)]

    if ch[5] > 0.5:
        gripper = "close"
    elif ch[5] < -0.5:
        gripper = "open"
    else:
        gripper = "hold"
    return ActuatorSetpoints(track_left=left, track_right=right,
                             flipper_rate=flipper_rate,
                             arm_joint_targets=tuple(targets), gripper=gripper)


def safe_stop_check(last_command_age_ms: int, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> str:
    """"safe_stop" once the newest command is older than the timeout."""
    if last_command_age_ms < 0:
        raise ValueError("command age must be >= 0")
    if timeout_ms <= 0:
        raise ValueError("timeout must be > 0")
    return "safe_stop" if last_command_age_ms > timeout_ms else "normal"
