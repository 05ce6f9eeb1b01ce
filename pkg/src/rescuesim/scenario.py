"""Scenario files: terrain, robot tuning, environment, props and mission.

A scenario is a line-oriented text document with a `scenario v1` header.
Each line is a directive; `#` starts a comment. Directives may appear in
any order, `terrain`, `start` and at least one `goal` are mandatory.

    scenario v1
    name flat_demo
    terrain flat 10 4
    start 1.0 2.0 0.0
    seed 7
    goal reach 4.0 2.0 0.5

Climb features built by the terrain directive (slope, stair) run along
+x after a 2 m flat approach; missions are laid out in that frame.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from .chassis import ChassisConfig, ChassisState, DEFAULT_CONFIG, passive_conform
from .sensors import EnvironmentField, HazardSource
from .terrain import TerrainGrid, build_scenario_terrain, feature_extent

GOAL_KINDS = ("reach", "detect", "grasp", "return")
DEFAULT_TICK_RATE = 50.0
DEFAULT_RETURN_RADIUS = 0.5

# ChassisConfig fields a scenario may override. Masses stay fixed: the
# budget invariants live in the config type, not in scenario files.
_CHASSIS_NUMERIC = ("length", "width", "height", "com_height", "front_fraction",
                    "hinge_x", "flipper_len", "v_max", "climb_max", "payload_max")


class ScenarioError(Exception):
    """Scenario is unusable: bad syntax or a broken invariant."""


class ScenarioFormatError(ScenarioError):
    """Scenario text could not be parsed."""


@dataclass(frozen=True)
class SceneObject:
    """A prop placed in the world, optionally small enough to grab."""

    object_id: str
    label: str
    position: tuple[float, float, float]
    graspable: bool = False

    def __post_init__(self):
        for name in ("object_id", "label"):
            v = getattr(self, name)
            if not v or v != v.strip() or any(c.isspace() for c in v) or "," in v or "#" in v:
                raise ScenarioError(f"bad object {name}: {v!r}")
        p = tuple(float(v) for v in self.position)
        if len(p) != 3 or not all(math.isfinite(v) for v in p):
            raise ScenarioError(f"object position must be 3 finite floats, got {self.position}")
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class MissionGoal:
    """One ordered mission step.

    reach: enter the circle (x, y, radius). detect: the stub detector
    reports `label`. grasp: hold the object with id `target`. return:
    come back within `radius` of the start pose.
    """

    kind: str
    target: str | None = None                # detect label / grasp object id
    x: float = 0.0
    y: float = 0.0
    radius: float = DEFAULT_RETURN_RADIUS

    def __post_init__(self):
        if self.kind not in GOAL_KINDS:
            raise ScenarioError(f"unknown goal kind {self.kind!r}")
        if self.kind in ("detect", "grasp") and not self.target:
            raise ScenarioError(f"{self.kind} goal needs a target")
        if self.kind in ("reach", "return") and self.radius <= 0:
            raise ScenarioError("goal radius must be > 0")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "radius", float(self.radius))

    def describe(self) -> str:
        if self.kind == "reach":
            return f"reach ({self.x:g}, {self.y:g})"
        if self.kind == "return":
            return "return to start"
        return f"{self.kind} {self.target}"


@dataclass(frozen=True)
class Scenario:
    """Everything a mission run needs besides the command stream."""

    name: str = "unnamed"
    terrain_kind: str = "flat"
    terrain_params: tuple[float, ...] = ()
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)   # x, y, heading
    seed: int = 0
    tick_rate: float = DEFAULT_TICK_RATE
    payload: float = 0.0
    noise_std: float = 0.0
    declination: float = 0.0
    environment: EnvironmentField = field(default_factory=EnvironmentField)
    objects: tuple[SceneObject, ...] = ()
    goals: tuple[MissionGoal, ...] = ()
    chassis_overrides: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise ScenarioError(f"tick_rate must be > 0, got {self.tick_rate}")
        if self.payload < 0:
            raise ScenarioError("payload must be >= 0")
        if self.noise_std < 0:
            raise ScenarioError("noise must be >= 0")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate object ids in {sorted(ids)}")
        for g in self.goals:
            if g.kind == "grasp" and g.target not in ids:
                raise ScenarioError(f"grasp goal references unknown object {g.target!r}")
        for name, _ in self.chassis_overrides:
            if name not in _CHASSIS_NUMERIC:
                raise ScenarioError(f"chassis override {name!r} not allowed")
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "terrain_params",
                           tuple(float(v) for v in self.terrain_params))

    def build_terrain(self) -> TerrainGrid:
        try:
            return build_scenario_terrain(self.terrain_kind, *self.terrain_params)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc

    def build_config(self) -> ChassisConfig:
        if not self.chassis_overrides:
            return DEFAULT_CONFIG
        return dataclasses.replace(DEFAULT_CONFIG, **dict(self.chassis_overrides))

    def feature(self):
        """Climb-feature extent of the terrain, or None on level ground."""
        return feature_extent(self.terrain_kind, *self.terrain_params)

    def object_by_id(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def to_text(self) -> str:
        lines = ["scenario v1", f"name {self.name}"]
        lines.append("terrain " + " ".join(
            [self.terrain_kind] + [repr(v) for v in self.terrain_params]))
        lines.append("start " + " ".join(repr(v) for v in self.start))
        lines.append(f"seed {self.seed}")
        lines.append(f"tick_rate {self.tick_rate!r}")
        if self.payload:
            lines.append(f"payload {self.payload!r}")
        if self.noise_std:
            lines.append(f"noise {self.noise_std!r}")
        if self.declination:
            lines.append(f"declination {self.declination!r}")
        env = self.environment
        lines.append(f"ambient {env.ambient_temperature!r} {env.ambient_humidity!r}")
        for s in env.hazard_sources:
            lines.append("source " + " ".join(
                [s.kind] + [repr(float(v)) for v in s.position]
                + [repr(float(s.intensity)), repr(float(s.sigma))]))
        for o in self.objects:
            flag = " graspable" if o.graspable else ""
            lines.append(f"object {o.object_id} {o.label} "
                         + " ".join(repr(v) for v in o.position) + flag)
        for g in self.goals:
            if g.kind == "reach":
                lines.append(f"goal reach {g.x!r} {g.y!r} {g.radius!r}")
            elif g.kind == "return":
                lines.append(f"goal return {g.radius!r}")
            else:
                lines.append(f"goal {g.kind} {g.target}")
        for name, value in self.chassis_overrides:
            lines.append(f"chassis {name} {value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scenario":
        lines = []
        for raw in text.splitlines():
            body = raw.split("#", 1)[0].strip()
            if body:
                lines.append(body)
        if not lines or lines[0].split() != ["scenario", "v1"]:
            head = lines[0] if lines else ""
            raise ScenarioFormatError(f"bad scenario header: {head!r}")

        fields: dict = {"environment": None}
        ambient = (22.0, 55.0)
        sources: list[HazardSource] = []
        objects: list[SceneObject] = []
        goals: list[MissionGoal] = []
        overrides: list[tuple[str, float]] = []
        seen_terrain = seen_start = False

        def floats(parts, n, what):
            if len(parts) != n:
                raise ScenarioFormatError(f"{what} needs {n} values, got {parts}")
            try:
                return [float(p) for p in parts]
            except ValueError as exc:
                raise ScenarioFormatError(f"bad number in {what}: {parts}") from exc

        for ln in lines[1:]:
            parts = ln.split()
            key, args = parts[0], parts[1:]
            try:
                if key == "name":
                    if len(args) != 1:
                        raise ScenarioFormatError(f"name needs one token: {ln!r}")
                    fields["name"] = args[0]
                elif key == "terrain":
                    if not args:
                        raise ScenarioFormatError("terrain needs a kind")
                    fields["terrain_kind"] = args[0]
                    fields["terrain_params"] = tuple(
                        floats(args[1:], len(args) - 1, "terrain"))
                    seen_terrain = True
                elif key == "start":
                    fields["start"] = tuple(floats(args, 3, "start"))
                    seen_start = True
                elif key == "seed":
                    fields["seed"] = int(args[0])
                elif key == "tick_rate":
                    fields["tick_rate"] = floats(args, 1, "tick_rate")[0]
                elif key == "payload":
                    fields["payload"] = floats(args, 1, "payload")[0]
                elif key == "noise":
                    fields["noise_std"] = floats(args, 1, "noise")[0]
                elif key == "declination":
                    fields["declination"] = floats(args, 1, "declination")[0]
                elif key == "ambient":
                    vals = floats(args, 2, "ambient")
                    ambient = (vals[0], vals[1])
                elif key == "source":
                    if len(args) != 6 or args[0] not in ("heat", "gas"):
                        raise ScenarioFormatError(f"bad source line: {ln!r}")
                    v = floats(args[1:], 5, "source")
                    sources.append(HazardSource(position=(v[0], v[1], v[2]),
                                                kind=args[0], intensity=v[3],
                                                sigma=v[4]))
                elif key == "object":
                    graspable = args and args[-1] == "graspable"
                    body = args[:-1] if graspable else args
                    if len(body) != 5:
                        raise ScenarioFormatError(f"bad object line: {ln!r}")
                    objects.append(SceneObject(
                        object_id=body[0], label=body[1],
                        position=tuple(floats(body[2:], 3, "object position")),
                        graspable=bool(graspable)))
                elif key == "goal":
                    if not args:
                        raise ScenarioFormatError("goal needs a kind")
                    kind = args[0]
                    if kind == "reach":
                        v = floats(args[1:], 3, "reach goal")
                        goals.append(MissionGoal("reach", x=v[0], y=v[1], radius=v[2]))
                    elif kind == "return":
                        r = floats(args[1:], 1, "return goal")[0] if len(args) > 1 \
                            else DEFAULT_RETURN_RADIUS
                        goals.append(MissionGoal("return", radius=r))
                    elif kind in ("detect", "grasp"):
                        if len(args) != 2:
                            raise ScenarioFormatError(f"bad goal line: {ln!r}")
                        goals.append(MissionGoal(kind, target=args[1]))
                    else:
                        raise ScenarioFormatError(f"unknown goal kind {kind!r}")
                elif key == "chassis":
                    if len(args) != 2:
                        raise ScenarioFormatError(f"bad chassis line: {ln!r}")
                    overrides.append((args[0], floats(args[1:], 1, "chassis")[0]))
                else:
                    raise ScenarioFormatError(f"unknown directive {key!r}")
            except (ValueError, IndexError) as exc:
                raise ScenarioFormatError(f"bad line {ln!r}: {exc}") from exc

        if not seen_terrain:
            raise ScenarioFormatError("scenario has no terrain directive")
        if not seen_start:
            raise ScenarioFormatError("scenario has no start directive")
        fields["environment"] = EnvironmentField(
            ambient_temperature=ambient[0], ambient_humidity=ambient[1],
            hazard_sources=tuple(sources))
        fields["objects"] = tuple(objects)
        fields["goals"] = tuple(goals)
        fields["chassis_overrides"] = tuple(overrides)
        return cls(**fields)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as f:
        scn = Scenario.from_text(f.read())
    validate_scenario(scn)
    return scn


def validate_scenario(scn: Scenario) -> TerrainGrid:
    """Full static validation; returns the built terrain.

    Beyond the type-level checks this confirms the terrain builds, every
    detect goal has a matching label, and the start pose (including the
    whole footprint once settled) lies inside the terrain.
    """
    terrain = scn.build_terrain()
    config = scn.build_config()
    if not scn.goals:
        raise ScenarioError("mission needs at least one goal")
    labels = {o.label for o in scn.objects}
    for g in scn.goals:
        if g.kind == "detect" and g.target not in labels:
            raise ScenarioError(f"detect goal references unknown label {g.target!r}")
    if not terrain.in_bounds(scn.start[0], scn.start[1]):
        raise ScenarioError(f"start pose {scn.start[:2]} outside terrain")
    for o in scn.objects:
        if not terrain.in_bounds(o.position[0], o.position[1]):
            raise ScenarioError(f"object {o.object_id} outside terrain")
    try:
        passive_conform(ChassisState(position=scn.start[:2], heading=scn.start[2],
                                     payload_mass=scn.payload), terrain, config)
    except Exception as exc:
        raise ScenarioError(f"start footprint does not settle: {exc}") from exc
    return terrain
