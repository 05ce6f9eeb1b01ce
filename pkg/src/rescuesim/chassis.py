"""Double-tracked chassis with a passive hinged flipper body.

Covers skid-steer locomotion on a heightmap, passive conformation of the
two-body chassis to the ground, center-of-mass bookkeeping (tracks, arm,
payload), quasi-static ZMP stability with a signed support-polygon
margin, the climb/payload gates, and the closed-form tip-over angles.

Frames: the body frame has its origin at the footprint center on the
track plane, x forward, y left, z up. World attitude is heading (yaw,
about world z), pitch (positive nose-up), roll (positive left-side-up).
The flipper hinge axis runs across the body at track level, x = hinge_x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .arm import ArmConfig, JointState, default_arm_config, forward_kinematics, \
    link_centroids_and_masses
from .terrain import TerrainBoundsError, TerrainGrid, height_at

TOTAL_BODY_MASS = 23.63  # kg, arm + tracks + others per the mass budget

# A raised flipper tip still catches the ground if the body only has to
# rock forward a little for it to land; beyond this rock angle the tip
# is genuinely airborne and buys no support.
TIP_CATCH_ANGLE_DEG = 12.0


class SingularSupportError(Exception):
    """Fewer than three distinct support points; stability is undefined."""


@dataclass(frozen=True)
class ChassisConfig:
    """Geometry and mass budget of the robot body.

    Lengths in meters, angles in degrees, masses in kg. The defaults are
    the stock robot: 450 x 270 x 210 mm, 23.63 kg total, flipper range
    45 degrees, rated for 40 degree climbs at up to 12 kg payload.
    """

    length: float = 0.450
    width: float = 0.270
    height: float = 0.210
    mass_arm: float = 4.3
    mass_tracks: float = 18.70
    mass_others: float = 0.63
    flipper_max: float = 45.0
    climb_max: float = 40.0
    payload_max: float = 12.0
    com_height: float = 0.105          # height / 2
    front_fraction: float = 0.5        # share of track mass in the flipper body
    hinge_x: float = 0.0               # hinge position, forward of body center
    flipper_len: float = 0.225         # hinge to flipper tip
    v_max: float = 0.5                 # m/s per track
    arm: ArmConfig = field(default_factory=default_arm_config)
    arm_mount: tuple[float, float, float] | None = None

    def __post_init__(self):
        if min(self.length, self.width, self.height, self.com_height,
               self.flipper_len, self.v_max) <= 0:
            raise ValueError("all chassis dimensions must be positive")
        total = self.mass_arm + self.mass_tracks + self.mass_others
        if abs(total - TOTAL_BODY_MASS) > 1e-9:
            raise ValueError(f"mass budget must sum to {TOTAL_BODY_MASS} kg, got {total}")
        if not 0.0 < self.front_fraction < 1.0:
            raise ValueError("front_fraction must be in (0, 1)")
        if self.flipper_max != 45.0:
            raise ValueError("flipper range is fixed at 45 degrees")
        if not self.climb_max < self.flipper_max:
            raise ValueError("climb limit must stay below the flipper range")
        arm_total = sum(self.arm.link_masses) + self.arm.gripper_mass
        if abs(arm_total - self.mass_arm) > 1e-9:
            raise ValueError("arm config masses must match the chassis arm budget")
        if not -self.length / 2 < self.hinge_x < self.length / 2:
            raise ValueError("hinge must sit between the body ends")
        if self.arm_mount is None:
            object.__setattr__(self, "arm_mount", (0.0, 0.0, self.com_height))

    @property
    def total_mass(self) -> float:
        return self.mass_arm + self.mass_tracks + self.mass_others


@dataclass(frozen=True)
class ChassisState:
    """Robot pose and drive state. Angles in degrees, speeds in m/s."""

    position: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    flipper_angle: float = 0.0
    track_speed_left: float = 0.0
    track_speed_right: float = 0.0
    payload_mass: float = 0.0

    def __post_init__(self):
        vals = (*self.position, self.heading, self.pitch, self.roll,
                self.flipper_angle, self.track_speed_left,
                self.track_speed_right, self.payload_mass)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("chassis state must be finite")
        if not 0.0 <= self.flipper_angle <= 45.0:
            raise ValueError(f"flipper angle {self.flipper_angle} outside [0, 45]")
        if self.payload_mass < 0:
            raise ValueError("payload mass must be >= 0")


@dataclass(frozen=True)
class ActuatorSetpoints:
    """Low-level targets one control tick applies to the chassis and arm.

    gripper "hold" keeps whatever state the gripper is in; it is what a
    neutral command channel maps to, so idle sticks never force the jaws.
    """

    track_left: float = 0.0
    track_right: float = 0.0
    flipper_rate: float = 0.0                       # deg/s
    arm_joint_targets: tuple[float, ...] = (0.0,) * 6
    gripper: Literal["open", "close", "hold"] = "hold"

    def __post_init__(self):
        if len(self.arm_joint_targets) != 6:
            raise ValueError("arm_joint_targets needs 6 entries")
        object.__setattr__(self, "arm_joint_targets",
                           tuple(float(a) for a in self.arm_joint_targets))
        if self.gripper not in ("open", "close", "hold"):
            raise ValueError(f"gripper must be open, close or hold, got {self.gripper!r}")


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Quasi-static stance assessment in the body frame."""

    com: np.ndarray                    # 3D, body frame
    zmp_projection: np.ndarray         # 2D, on the track plane
    support_polygon: list              # CCW hull of contact points, 2D
    margin: float                      # signed distance to the hull boundary
    tipped: bool

    def __post_init__(self):
        if self.tipped != (self.margin < 0):
            raise ValueError("tipped must mirror margin < 0")


DEFAULT_CONFIG = ChassisConfig()


def _rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def attitude_matrix(heading: float, pitch: float, roll: float) -> np.ndarray:
    """Body-to-world rotation: yaw about z, then nose-up pitch, then
    left-side-up roll."""
    cy, sy = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    cp, sp = math.cos(math.radians(pitch)), math.sin(math.radians(pitch))
    cr, sr = math.cos(math.radians(roll)), math.sin(math.radians(roll))
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    ry = np.array([[cp, 0, -sp], [0, 1.0, 0], [sp, 0, cp]])   # nose-up positive
    rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def rear_corners_body(config: ChassisConfig) -> np.ndarray:
    """The rear body's four track corners on the track plane, body frame."""
    x0, x1 = -config.length / 2.0, config.hinge_x
    hw = config.width / 2.0
    return np.array([
        [x0, -hw, 0.0], [x0, hw, 0.0], [x1, hw, 0.0], [x1, -hw, 0.0],
    ])


def flipper_edge_points(config: ChassisConfig, alpha_deg: float) -> np.ndarray:
    """Flipper tip pair in the body frame: the alpha = 0 resting position
    rotated rigidly about the hinge axis (y-direction at x = hinge_x,
    track level)."""
    a = math.radians(alpha_deg)
    ca, sa = math.cos(a), math.sin(a)
    hw = config.width / 2.0
    dx = config.flipper_len  # tip offset from hinge at rest
    x = config.hinge_x + dx * ca
    z = dx * sa
    return np.array([[x, -hw, z], [x, hw, z]])


def rotate_about_hinge(config: ChassisConfig, point, alpha_deg: float) -> np.ndarray:
    """Rigid rotation of a body-frame point about the flipper hinge axis."""
    p = np.asarray(point, dtype=float)
    a = math.radians(alpha_deg)
    ca, sa = math.cos(a), math.sin(a)
    dx = p[0] - config.hinge_x
    dz = p[2]
    return np.array([config.hinge_x + dx * ca - dz * sa, p[1], dx * sa + dz * ca])


def _world_xy(state: ChassisState, body_xy) -> np.ndarray:
    c, s = math.cos(math.radians(state.heading)), math.sin(math.radians(state.heading))
    bx, by = body_xy[0], body_xy[1]
    return np.array([state.position[0] + c * bx - s * by,
                     state.position[1] + s * bx + c * by])


def passive_conform(state: ChassisState, terrain: TerrainGrid,
                    config: ChassisConfig = DEFAULT_CONFIG) -> ChassisState:
    """Settle the chassis onto the terrain.

    Pitch and roll come from a least-squares plane through the ground
    contacts: the four rear corners, joined by the flipper tips whenever
    those rest on the same surface (flipper down, tips within 5 mm of
    the rear plane). Terrain rising ahead of the hinge pushes the
    flipper up: alpha never drops below its held value and never exceeds
    flipper_max.
    """
    def sample(body_pt):
        w = _world_xy(state, body_pt)
        if not terrain.in_bounds(w[0], w[1]):
            raise TerrainBoundsError(
                f"chassis footprint leaves the terrain at ({w[0]:.3f}, {w[1]:.3f})")
        return (w[0], w[1], height_at(terrain, w[0], w[1]))

    def fit(points):
        arr = np.asarray(points)
        A = np.column_stack([arr[:, 0], arr[:, 1], np.ones(len(arr))])
        coeffs, *_ = np.linalg.lstsq(A, arr[:, 2], rcond=None)
        return coeffs

    pts = [sample(p) for p in rear_corners_body(config)]
    a, b, c = fit(pts)
    if state.flipper_angle <= 1e-12:
        tips = [sample(p) for p in flipper_edge_points(config, 0.0)]
        # A riser or obstacle under a tip is a flipper matter, not a
        # body-attitude one: only same-plane tips join the fit.
        if all(abs(t[2] - (a * t[0] + b * t[1] + c)) <= 0.005 for t in tips):
            a, b, c = fit(pts + tips)

    hcos = math.cos(math.radians(state.heading))
    hsin = math.sin(math.radians(state.heading))
    forward = np.array([hcos, hsin])
    left = np.array([-hsin, hcos])
    grad = np.array([a, b])
    pitch = math.degrees(math.atan(float(grad @ forward)))
    roll = math.degrees(math.atan(float(grad @ left)))

    # Terrain-demanded flipper angle: the steepest elevation above the
    # fitted plane among points the flipper can reach from the hinge.
    demand = 0.0
    flen = config.flipper_len
    n_samples = max(4, int(flen / (terrain.cell_size / 4.0)))
    for s in np.linspace(flen / n_samples, flen, n_samples):
        w = _world_xy(state, (config.hinge_x + s, 0.0))
        if not terrain.in_bounds(w[0], w[1]):
            break
        rise = height_at(terrain, w[0], w[1]) - (a * w[0] + b * w[1] + c)
        # the plane fit carries ~1e-16 residuals; those are not demands
        if rise <= 1e-9 or math.hypot(s, rise) > flen:
            continue
        demand = max(demand, math.degrees(math.atan2(rise, s)))

    alpha = min(max(state.flipper_angle, demand), config.flipper_max)
    return ChassisState(
        position=state.position, heading=state.heading,
        pitch=pitch, roll=roll, flipper_angle=alpha,
        track_speed_left=state.track_speed_left,
        track_speed_right=state.track_speed_right,
        payload_mass=state.payload_mass,
    )


def compute_com(state: ChassisState, config: ChassisConfig,
                arm_joints: JointState) -> np.ndarray:
    """Center of mass in the body frame.

    Mass-weighted sum of the rear track body, the flipper track body
    (rotated by alpha about the hinge), the fixed electronics, the arm
    links at their current configuration, and any payload held at the
    gripper. Total mass is the 23.63 kg budget plus payload.
    """
    ch = config.com_height
    rear_center = np.array([(-config.length / 2.0 + config.hinge_x) / 2.0, 0.0, ch])
    front_rest = np.array([(config.hinge_x + config.length / 2.0) / 2.0, 0.0, ch])
    front_center = rotate_about_hinge(config, front_rest, state.flipper_angle)

    m_front = config.front_fraction * config.mass_tracks
    m_rear = config.mass_tracks - m_front
    mount = np.asarray(config.arm_mount)

    weighted = (m_rear * rear_center
                + m_front * front_center
                + config.mass_others * np.array([0.0, 0.0, ch]))
    total = m_rear + m_front + config.mass_others

    cents, masses = link_centroids_and_masses(config.arm, arm_joints)
    for cpt, m in zip(cents, masses):
        weighted = weighted + m * (mount + cpt)
        total += m

    if state.payload_mass > 0:
        grip = mount + forward_kinematics(config.arm, arm_joints).position
        weighted = weighted + state.payload_mass * grip
        total += state.payload_mass

    return weighted / total


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns the CCW hull without repetition."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        return np.asarray(pts)

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def _signed_margin(hull: np.ndarray, point: np.ndarray) -> float:
    """Signed distance from point to the hull boundary: positive inside."""
    n = len(hull)
    inside = True
    min_edge = math.inf
    min_bound = math.inf
    for i in range(n):
        p, q = hull[i], hull[(i + 1) % n]
        edge = q - p
        elen = float(np.hypot(*edge))
        if elen < 1e-12:
            continue
        # CCW hull: inward side is the left of each edge
        rel = point - p
        s = (edge[0] * rel[1] - edge[1] * rel[0]) / elen
        if s < 0:
            inside = False
        min_edge = min(min_edge, s)
        t = float(np.dot(point - p, edge)) / (elen * elen)
        t = min(1.0, max(0.0, t))
        min_bound = min(min_bound, float(np.hypot(*(p + t * edge - point))))
    return min_edge if inside else -min_bound


def compute_stability(state: ChassisState, config: ChassisConfig,
                      terrain: TerrainGrid, arm_joints: JointState) -> StabilityReport:
    """Quasi-static stance assessment.

    The ZMP is the gravity-line projection of the CoM onto the track
    plane; the margin is its signed distance to the support polygon (the
    hull of track contacts, extended by the flipper tips when they bear
    on the ground). Everything is computed in the body frame, which makes
    the result independent of heading by construction.
    """
    com = compute_com(state, config, arm_joints)
    R = attitude_matrix(state.heading, state.pitch, state.roll)
    catch = config.flipper_len * math.sin(math.radians(TIP_CATCH_ANGLE_DEG))
    contacts = [p[:2] for p in rear_corners_body(config)]
    for tip in flipper_edge_points(config, state.flipper_angle):
        if state.flipper_angle <= 1e-12:
            contacts.append(tip[:2])
            continue
        # A raised tip counts when it bears on higher ground, or hangs
        # close enough that a small forward rock would land it; at or
        # below the surface means pressed against it.
        w = R @ tip
        wx, wy = state.position[0] + w[0], state.position[1] + w[1]
        if terrain.in_bounds(wx, wy) and terrain.in_bounds(*state.position):
            base = height_at(terrain, *state.position)
            if (base + w[2]) - height_at(terrain, wx, wy) <= catch:
                contacts.append(tip[:2])

    hull = _convex_hull(np.asarray(contacts))
    if len(hull) < 3:
        raise SingularSupportError("support polygon is degenerate")

    g_body = R.T @ np.array([0.0, 0.0, -1.0])
    if g_body[2] >= -1e-12:
        # Gravity no longer pierces the track plane: past the tipping point.
        return StabilityReport(com=com, zmp_projection=com[:2].copy(),
                               support_polygon=[tuple(p) for p in hull],
                               margin=-math.inf, tipped=True)

    s = -com[2] / g_body[2]
    zmp = com[:2] + s * g_body[:2]
    margin = _signed_margin(hull, zmp)
    return StabilityReport(com=com, zmp_projection=zmp,
                           support_polygon=[tuple(p) for p in hull],
                           margin=margin, tipped=margin < 0)


def check_climbable(slope: float, flipper_max: float, payload: float,
                    config: ChassisConfig = DEFAULT_CONFIG) -> bool:
    """True when both rated limits hold: slope at most climb_max and
    payload at most payload_max, boundaries included.

    flipper_max rides along in the call shape used by mission planning;
    the gate itself is set by the two rated limits.
    """
    if not (0.0 <= slope <= 90.0):
        raise ValueError(f"slope must be in [0, 90] degrees, got {slope}")
    if payload < 0:
        raise ValueError("payload must be >= 0")
    return slope <= config.climb_max and payload <= config.payload_max


def tip_over_angle(config: ChassisConfig,
                   direction: Literal["pitch", "roll"] = "pitch") -> float:
    """Static tip angle for a centered CoM: atan(half extent / CoM height)."""
    if direction == "pitch":
        half = config.length / 2.0
    elif direction == "roll":
        half = config.width / 2.0
    else:
        raise ValueError(f"direction must be pitch or roll, got {direction!r}")
    return math.degrees(math.atan2(half, config.com_height))


def step_locomotion(state: ChassisState, setpoints: ActuatorSetpoints,
                    terrain: TerrainGrid, dt: float,
                    config: ChassisConfig = DEFAULT_CONFIG) -> ChassisState:
    """One skid-steer integration step on the conformed plane.

    v = (vL + vR) / 2 advances the ground-plane position along the
    heading, scaled by cos(pitch); w = (vR - vL) / width turns the
    heading. The flipper integrates its commanded rate. A step that would
    carry the footprint off the terrain halts in place instead of
    erroring: the pose keeps its last legal value.
    """
    if not 0.0 < dt <= 1.0:
        raise ValueError(f"dt must be in (0, 1] s, got {dt}")
    vl = min(max(setpoints.track_left, -config.v_max), config.v_max)
    vr = min(max(setpoints.track_right, -config.v_max), config.v_max)
    v = (vl + vr) / 2.0
    omega = (vr - vl) / config.width  # rad/s

    heading = state.heading + math.degrees(omega * dt)
    advance = v * math.cos(math.radians(state.pitch)) * dt
    x = state.position[0] + advance * math.cos(math.radians(heading))
    y = state.position[1] + advance * math.sin(math.radians(heading))

    alpha = state.flipper_angle + setpoints.flipper_rate * dt
    alpha = min(max(alpha, 0.0), config.flipper_max)

    moved = ChassisState(
        position=(x, y), heading=heading,
        pitch=state.pitch, roll=state.roll, flipper_angle=alpha,
        track_speed_left=vl, track_speed_right=vr,
        payload_mass=state.payload_mass,
    )
    try:
        return passive_conform(moved, terrain, config)
    except TerrainBoundsError:
        held = ChassisState(
            position=state.position, heading=state.heading,
            pitch=state.pitch, roll=state.roll, flipper_angle=alpha,
            track_speed_left=0.0, track_speed_right=0.0,
            payload_mass=state.payload_mass,
        )
        return passive_conform(held, terrain, config)
