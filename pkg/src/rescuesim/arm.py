"""6-DOF manipulator kinematics.

Rotation-matrix forward kinematics over six revolute joints described by
Denavit-Hartenberg rows, a geometric Jacobian, damped-least-squares
inverse kinematics, and two derived quantities: angular momentum about
the arm base and a quasi-static gravity-torque power estimate.

Angles at the interfaces are degrees (matching the rest of the stack);
internals work in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81  # m/s^2, acts along -z of the arm base frame

ARM_TOTAL_MASS = 4.3  # kg, six links plus gripper servo


class JointLimitError(Exception):
    """A joint angle is outside its configured limits."""


class UnreachableTargetError(Exception):
    """IK failed to converge; carries the best residual reached."""

    def __init__(self, message: str, position_error: float, orientation_error: float,
                 best_joints: tuple[float, ...]):
        super().__init__(message)
        self.position_error = position_error
        self.orientation_error = orientation_error
        self.best_joints = best_joints


@dataclass(frozen=True)
class DHRow:
    """One joint row: link length a (m), twist alpha (deg), offset d (m),
    joint angle offset (deg)."""

    a: float
    alpha_deg: float
    d: float
    offset_deg: float


@dataclass(frozen=True)
class ArmConfig:
    """Geometry, limits, and mass split of the manipulator."""

    rows: tuple[DHRow, ...]
    joint_limits_deg: tuple[tuple[float, float], ...]
    link_masses: tuple[float, ...]           # six values, kg
    gripper_mass: float                      # kg; point mass at the reach point
    gripper_reach: tuple[float, float, float]  # reach point in the final-link frame, m

    def __post_init__(self):
        if len(self.rows) != 6:
            raise ValueError(f"exactly 6 joint rows required, got {len(self.rows)}")
        if len(self.joint_limits_deg) != 6 or len(self.link_masses) != 6:
            raise ValueError("joint_limits_deg and link_masses must have 6 entries")
        for lo, hi in self.joint_limits_deg:
            if not lo < hi:
                raise ValueError(f"joint limit min must be < max, got ({lo}, {hi})")
        total = sum(self.link_masses) + self.gripper_mass
        if abs(total - ARM_TOTAL_MASS) > 1e-9:
            raise ValueError(f"link masses + gripper must sum to {ARM_TOTAL_MASS} kg, got {total}")

    @property
    def home_pose(self) -> "EndEffectorPose":
        """Pose at all-zero joint angles, the golden home reference."""
        return forward_kinematics(self, JointState(angles=(0.0,) * 6))


@dataclass(frozen=True)
class JointState:
    """Joint angles (deg) and velocities (deg/s)."""

    angles: tuple[float, ...]
    velocities: tuple[float, ...] = (0.0,) * 6

    def __post_init__(self):
        if len(self.angles) != 6 or len(self.velocities) != 6:
            raise ValueError("JointState needs 6 angles and 6 velocities")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "velocities", tuple(float(v) for v in self.velocities))


@dataclass(frozen=True, eq=False)
class EndEffectorPose:
    """Gripper reach-point position (m) and orientation in the arm base frame."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        r = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", r)


def default_arm_config() -> ArmConfig:
    """A six-revolute arm with 0.55 m total reach and the stock mass split.

    Elbow and wrist carry built-in bends at home so the zero pose is away
    from the stretched singularity.
    """
    return ArmConfig(
        rows=(
            DHRow(a=0.0, alpha_deg=-90.0, d=0.10, offset_deg=0.0),
            DHRow(a=0.20, alpha_deg=0.0, d=0.0, offset_deg=-90.0),
            DHRow(a=0.15, alpha_deg=0.0, d=0.0, offset_deg=30.0),
            DHRow(a=0.0, alpha_deg=-90.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.0, alpha_deg=90.0, d=0.0, offset_deg=30.0),
            DHRow(a=0.0, alpha_deg=0.0, d=0.05, offset_deg=0.0),
        ),
        joint_limits_deg=(
            (-175.0, 175.0),
            (-120.0, 120.0),
            (-150.0, 150.0),
            (-175.0, 175.0),
            (-120.0, 120.0),
            (-175.0, 175.0),
        ),
        link_masses=(1.0, 0.9, 0.8, 0.5, 0.4, 0.3),
        gripper_mass=0.4,
        gripper_reach=(0.0, 0.0, 0.05),
    )


def point_mass_arm_config(gripper_reach=(0.0, 0.0, 0.0)) -> ArmConfig:
    """Degenerate arm whose full 4.3 kg sits at the base, for balance
    analyses that want the chassis budget without a posture term.

    All link geometry is zero, so joint angles never move any mass; the
    massless gripper point can still be offset to place a payload.
    """
    zero = DHRow(a=0.0, alpha_deg=0.0, d=0.0, offset_deg=0.0)
    return ArmConfig(
        rows=(zero,) * 6,
        joint_limits_deg=((-175.0, 175.0),) * 6,
        link_masses=(1.0, 0.9, 0.8, 0.6, 0.5, 0.5),
        gripper_mass=0.0,
        gripper_reach=tuple(float(v) for v in gripper_reach),
    )


def check_limits(config: ArmConfig, joints: JointState) -> None:
    for i, (a, (lo, hi)) in enumerate(zip(joints.angles, config.joint_limits_deg)):
        if not (lo <= a <= hi):
            raise JointLimitError(f"joint {i + 1} angle {a} outside limits [{lo}, {hi}]")


def clamp_to_limits(config: ArmConfig, angles_deg: np.ndarray) -> np.ndarray:
    lo = np.array([l for l, _ in config.joint_limits_deg])
    hi = np.array([h for _, h in config.joint_limits_deg])
    return np.clip(angles_deg, lo, hi)


def _dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


class _Chain:
    """One pass of the kinematic chain: joint anchors, axes, link origins."""

    __slots__ = ("origins", "axes", "anchors", "rotation", "ee")

    def __init__(self, config: ArmConfig, angles_deg):
        T = np.eye(4)
        origins = [T[:3, 3].copy()]   # o_0 .. o_6
        axes = []                     # joint i rotates about axes[i] at anchors[i]
        anchors = []
        for i, row in enumerate(config.rows):
            axes.append(T[:3, 2].copy())
            anchors.append(T[:3, 3].copy())
            theta = math.radians(angles_deg[i] + row.offset_deg)
            T = T @ _dh_transform(theta, row.d, row.a, math.radians(row.alpha_deg))
            origins.append(T[:3, 3].copy())
        self.origins = origins
        self.axes = axes
        self.anchors = anchors
        self.rotation = T[:3, :3]
        self.ee = T[:3, 3] + T[:3, :3] @ np.asarray(config.gripper_reach)

    def point_velocity(self, point: np.ndarray, qdot_rad: np.ndarray,
                       n_joints: int = 6) -> np.ndarray:
        """Velocity of a point rigidly attached past joint n_joints."""
        v = np.zeros(3)
        for i in range(n_joints):
            v += qdot_rad[i] * np.cross(self.axes[i], point - self.anchors[i])
        return v


def link_origins(config: ArmConfig, joints: JointState) -> list[np.ndarray]:
    """Origins o_0..o_6 of the joint frames plus the gripper reach point."""
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    return ch.origins + [ch.ee]


def link_centroids_and_masses(config: ArmConfig, joints: JointState):
    """Per-link centroid (segment midpoint) and mass, gripper included."""
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    cents = [(ch.origins[i] + ch.origins[i + 1]) / 2.0 for i in range(6)]
    masses = list(config.link_masses)
    cents.append(ch.ee)
    masses.append(config.gripper_mass)
    return cents, masses


def forward_kinematics(config: ArmConfig, joints: JointState) -> EndEffectorPose:
    """Pose of the gripper reach point in the arm base frame."""
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    return EndEffectorPose(position=ch.ee, orientation=ch.rotation)


def jacobian(config: ArmConfig, joints: JointState) -> np.ndarray:
    """Geometric 6x6 Jacobian at the gripper reach point.

    Rows 0..2 map joint rates (rad/s) to linear velocity (m/s), rows 3..5
    to angular velocity (rad/s).
    """
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    J = np.zeros((6, 6))
    for i in range(6):
        J[:3, i] = np.cross(ch.axes[i], ch.ee - ch.anchors[i])
        J[3:, i] = ch.axes[i]
    return J


def _rotation_vector(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, via quaternion extraction.

    Stable across the whole angle range including near 180 degrees, where
    the classic skew-part formula loses the axis.
    """
    tr = float(np.trace(R))
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        v = np.array([0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        v = np.array([(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        v = np.array([(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if w < 0:
        w, v = -w, -v
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(n, w)
    return v * (angle / n)


def _validate_rotation(R: np.ndarray) -> None:
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
        raise ValueError("target orientation is not a valid rotation matrix")


def _wrap_deg(a: float) -> float:
    return (a + 180.0) % 360.0 - 180.0


def _dls_attempt(config: ArmConfig, target_p: np.ndarray, target_R: np.ndarray,
                 q0: np.ndarray, budget: int, damping: float, cap: float,
                 position_tol: float, orientation_tol: float):
    """One damped-least-squares run from q0.

    Returns (solution or None, updates used, (best_pe, best_oe, best_q)).
    Stops early when the combined error hasn't improved by at least 0.1%
    for 15 consecutive updates; that plateau means the run is stuck in a
    basin this seed can't leave, and the budget is better spent elsewhere.
    """
    q = q0.copy()
    lam2 = damping * damping
    best_tot = math.inf
    best = (math.inf, math.inf, q.copy())
    stall = 0
    used = 0
    while True:
        ch = _Chain(config, q)
        e_pos = target_p - ch.ee
        e_rot = _rotation_vector(target_R @ ch.rotation.T)
        pe = float(np.linalg.norm(e_pos))
        oe = float(np.linalg.norm(e_rot))
        if pe < position_tol and oe < orientation_tol:
            return q, used, (pe, oe, q.copy())
        tot = pe + oe
        if tot < best_tot * 0.999:
            stall = 0
        else:
            stall += 1
        if tot < best_tot:
            best_tot = tot
            best = (pe, oe, q.copy())
        if used >= budget or stall >= 15:
            return None, used, best
        J = np.zeros((6, 6))
        for i in range(6):
            J[:3, i] = np.cross(ch.axes[i], ch.ee - ch.anchors[i])
            J[3:, i] = ch.axes[i]
        e = np.concatenate([e_pos, e_rot])
        dq = np.degrees(J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e))
        m = float(np.max(np.abs(dq)))
        if m > cap:
            dq *= cap / m
        q = clamp_to_limits(config, q + dq)
        used += 1


def _has_decoupled_wrist(config: ArmConfig) -> bool:
    """True for the stock geometry family: shoulder on the base axis,
    planar upper arm, spherical wrist with a z-aligned tool point."""
    r = config.rows
    return (r[0].a == 0.0 and r[0].alpha_deg == -90.0
            and r[1].alpha_deg == 0.0 and r[1].d == 0.0
            and r[2].alpha_deg == 0.0 and r[2].d == 0.0
            and r[3].a == 0.0 and r[3].d == 0.0 and r[3].alpha_deg == -90.0
            and r[4].a == 0.0 and r[4].d == 0.0 and r[4].alpha_deg == 90.0
            and r[5].a == 0.0 and r[5].alpha_deg == 0.0
            and config.gripper_reach[0] == 0.0 and config.gripper_reach[1] == 0.0)


def _branch_seeds(config: ArmConfig, target_p: np.ndarray, target_R: np.ndarray,
                  seed_q: np.ndarray) -> list[np.ndarray]:
    """Closed-form posture candidates for decoupled-wrist geometries.

    The wrist center depends only on the first three joints (base flip x
    elbow bend: up to 4 postures); the remaining rotation is a ZYZ Euler
    wrist (2 branches). Candidates outside joint limits are dropped, the
    rest sorted by distance from the caller's seed.
    """
    if not _has_decoupled_wrist(config):
        return []
    r = config.rows
    d1, l1, l2 = r[0].d, r[1].a, r[2].a
    wrist_len = r[5].d + config.gripper_reach[2]
    off = [row.offset_deg for row in r]
    lo = np.array([l for l, _ in config.joint_limits_deg])
    hi = np.array([h for _, h in config.joint_limits_deg])

    w = target_p - wrist_len * target_R[:, 2]
    h = w[2] - d1
    radial = math.hypot(w[0], w[1])
    if radial < 1e-9:
        bases = [(float(seed_q[0]), 0.0)]
    else:
        az = math.degrees(math.atan2(w[1], w[0]))
        bases = [(_wrap_deg(az - off[0]), radial),
                 (_wrap_deg(az + 180.0 - off[0]), -radial)]

    out: list[np.ndarray] = []
    for q1, rho in bases:
        c = (rho * rho + h * h - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
        if abs(c) > 1.0:
            continue
        g0 = math.acos(max(-1.0, min(1.0, c)))
        for gamma in (g0, -g0):
            # Elevation of the upper arm; theta2 = -psi2 for this family.
            psi2 = math.atan2(h, rho) - math.atan2(l2 * math.sin(gamma),
                                                   l1 + l2 * math.cos(gamma))
            q2 = _wrap_deg(-math.degrees(psi2) - off[1])
            q3 = _wrap_deg(-math.degrees(gamma) - off[2])
            T = np.eye(4)
            for i, qi in enumerate((q1, q2, q3)):
                T = T @ _dh_transform(math.radians(qi + off[i]), r[i].d, r[i].a,
                                      math.radians(r[i].alpha_deg))
            M = T[:3, :3].T @ target_R  # remaining wrist rotation, ZYZ
            sb = math.hypot(M[0, 2], M[1, 2])
            for b in (math.atan2(sb, M[2, 2]), math.atan2(-sb, M[2, 2])):
                s = math.sin(b)
                if abs(s) < 1e-9:
                    a_ang = math.radians(seed_q[3] + off[3])
                    c_ang = math.atan2(M[1, 0], M[0, 0]) - a_ang
                else:
                    a_ang = math.atan2(M[1, 2] / s, M[0, 2] / s)
                    c_ang = math.atan2(M[2, 1] / s, -M[2, 0] / s)
                cand = np.array([
                    q1, q2, q3,
                    _wrap_deg(math.degrees(a_ang) - off[3]),
                    _wrap_deg(math.degrees(b) - off[4]),
                    _wrap_deg(math.degrees(c_ang) - off[5]),
                ])
                if np.all(cand >= lo) and np.all(cand <= hi):
                    out.append(cand)
    out.sort(key=lambda cand: float(np.max(np.abs(cand - seed_q))))
    return out


def inverse_kinematics(config: ArmConfig, target: EndEffectorPose, seed: JointState,
                       damping: float = 0.01, step_cap_deg: float = 10.0,
                       max_iterations: int = 200,
                       position_tol: float = 1e-6,
                       orientation_tol: float = 1e-4) -> JointState:
    """Damped-least-squares IK.

    Iterates from the seed, clamping to joint limits every step, until the
    position error drops below position_tol (m) and the orientation error
    (angle of the residual rotation) below orientation_tol (rad). A run
    that plateaus has fallen into the wrong posture basin; the remaining
    update budget is then spent polishing closed-form branch candidates
    (decoupled-wrist geometries only). Total damped-least-squares updates
    across all attempts never exceed max_iterations. Raises
    UnreachableTargetError with the best residual when nothing converges.
    """
    _validate_rotation(target.orientation)
    check_limits(config, seed)
    tp = target.position
    tR = target.orientation
    seed_q = np.array(seed.angles, dtype=float)
    budget = max_iterations

    first_cap = max(1, (budget * 3) // 5)
    q, used, best = _dls_attempt(config, tp, tR, seed_q, min(budget, first_cap),
                                 damping, step_cap_deg, position_tol, orientation_tol)
    budget -= used
    if q is not None:
        return JointState(angles=tuple(q))

    for cand in _branch_seeds(config, tp, tR, seed_q):
        if budget <= 0:
            break
        q, used, b = _dls_attempt(config, tp, tR, cand, min(budget, 20),
                                  damping, step_cap_deg, position_tol, orientation_tol)
        budget -= used
        if q is not None:
            return JointState(angles=tuple(q))
        if b[0] + b[1] < best[0] + best[1]:
            best = b

    raise UnreachableTargetError(
        f"IK did not converge within {max_iterations} updates "
        f"(best position error {best[0]:.3e} m, orientation error {best[1]:.3e} rad)",
        position_error=best[0], orientation_error=best[1],
        best_joints=tuple(best[2]),
    )


def angular_momentum(config: ArmConfig, joints: JointState) -> np.ndarray:
    """Angular momentum about the arm base, kg m^2/s.

    Sum over links (and the gripper point mass) of m * (r x v), with each
    link's centroid at its segment midpoint and velocities from the
    kinematic chain.
    """
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    qdot = np.radians(np.array(joints.velocities))
    L = np.zeros(3)
    for i in range(6):
        c = (ch.origins[i] + ch.origins[i + 1]) / 2.0
        v = ch.point_velocity(c, qdot, n_joints=i + 1)
        L += config.link_masses[i] * np.cross(c, v)
    v_g = ch.point_velocity(ch.ee, qdot, n_joints=6)
    L += config.gripper_mass * np.cross(ch.ee, v_g)
    return L


def gravity_torques(config: ArmConfig, joints: JointState) -> np.ndarray:
    """Quasi-static gravity torque (N m) felt at each joint."""
    check_limits(config, joints)
    ch = _Chain(config, joints.angles)
    cents = [(ch.origins[i] + ch.origins[i + 1]) / 2.0 for i in range(6)] + [ch.ee]
    masses = list(config.link_masses) + [config.gripper_mass]
    g_vec = np.array([0.0, 0.0, -GRAVITY])
    tau = np.zeros(6)
    for i in range(6):
        moment = np.zeros(3)
        for k in range(i, 7):
            moment += np.cross(cents[k] - ch.anchors[i], masses[k] * g_vec)
        tau[i] = float(np.dot(ch.axes[i], moment))
    return tau


def power_estimate(config: ArmConfig, joints: JointState) -> float:
    """Quasi-static power draw estimate: sum of |gravity torque x joint rate|."""
    tau = gravity_torques(config, joints)
    omega = np.radians(np.array(joints.velocities))
    return float(np.sum(np.abs(tau * omega)))
