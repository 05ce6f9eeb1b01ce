"""Arm kinematics: FK oracles, IK roundtrips, Jacobian checks, momentum/power."""

import math

import numpy as np
import pytest

from rescuesim.arm import (
    ArmConfig,
    DHRow,
    EndEffectorPose,
    JointLimitError,
    JointState,
    UnreachableTargetError,
    angular_momentum,
    default_arm_config,
    forward_kinematics,
    inverse_kinematics,
    jacobian,
    link_origins,
    power_estimate,
)

CFG = default_arm_config()
HOME = JointState(angles=(0.0,) * 6)


def random_joints(rng, cfg=CFG, margin=0.0):
    lo = np.array([l for l, _ in cfg.joint_limits_deg])
    hi = np.array([h for _, h in cfg.joint_limits_deg])
    span = hi - lo
    return tuple(rng.uniform(lo + margin * span, hi - margin * span))


# --- forward kinematics ---

def test_fk_home_matches_hand_derivation():
    # Worked by hand through the six home transforms: the elbow bend and
    # wrist bend are both 30 degrees, so the tool point lands at
    # (0.1, 0.05*sqrt(3), 0.3 + 0.1*sqrt(3)).
    pose = forward_kinematics(CFG, HOME)
    s3 = math.sqrt(3.0)
    assert np.allclose(pose.position, [0.1, 0.05 * s3, 0.3 + 0.1 * s3], atol=1e-12)


def test_home_pose_property_is_fk_at_zero():
    pose = CFG.home_pose
    ref = forward_kinematics(CFG, HOME)
    assert np.array_equal(pose.position, ref.position)
    assert np.array_equal(pose.orientation, ref.orientation)


def test_fk_joint1_rigid_rotation():
    rng = np.random.default_rng(7)
    for _ in range(20):
        q = list(random_joints(rng))
        q[0] = 0.0
        base = forward_kinematics(CFG, JointState(angles=tuple(q))).position
        delta = rng.uniform(-170, 170)
        q[0] = delta
        rotated = forward_kinematics(CFG, JointState(angles=tuple(q))).position
        # joint 1 axis is base z: radius and height preserved
        assert math.isclose(math.hypot(*base[:2]), math.hypot(*rotated[:2]), abs_tol=1e-9)
        assert math.isclose(base[2], rotated[2], abs_tol=1e-9)
        c, s = math.cos(math.radians(delta)), math.sin(math.radians(delta))
        expect = np.array([c * base[0] - s * base[1], s * base[0] + c * base[1], base[2]])
        assert np.allclose(rotated, expect, atol=1e-9)


def _matrix_product_oracle(cfg, angles):
    T = np.eye(4)
    for row, q in zip(cfg.rows, angles):
        th = math.radians(q + row.offset_deg)
        al = math.radians(row.alpha_deg)
        ct, st = math.cos(th), math.sin(th)
        ca, sa = math.cos(al), math.sin(al)
        T = T @ np.array([
            [ct, -st * ca, st * sa, row.a * ct],
            [st, ct * ca, -ct * sa, row.a * st],
            [0, sa, ca, row.d],
            [0, 0, 0, 1.0],
        ])
    return T[:3, 3] + T[:3, :3] @ np.asarray(cfg.gripper_reach), T[:3, :3]


def test_fk_matches_bruteforce_matrix_product():
    rng = np.random.default_rng(21)
    for _ in range(50):
        q = random_joints(rng)
        pose = forward_kinematics(CFG, JointState(angles=q))
        p_ref, r_ref = _matrix_product_oracle(CFG, q)
        assert np.allclose(pose.position, p_ref, atol=1e-12)
        assert np.allclose(pose.orientation, r_ref, atol=1e-12)


def test_fk_orthonormality_and_det():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        q = random_joints(rng)
        R = forward_kinematics(CFG, JointState(angles=q)).orientation
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_fk_rejects_out_of_limit_joint():
    with pytest.raises(JointLimitError):
        forward_kinematics(CFG, JointState(angles=(200.0, 0, 0, 0, 0, 0)))


def test_link_origins_exposes_seven_points_plus_tool():
    pts = link_origins(CFG, HOME)
    assert len(pts) == 8
    assert np.allclose(pts[0], [0, 0, 0])
    assert np.allclose(pts[1], [0, 0, 0.10], atol=1e-12)
    # wrist cluster shares the spherical-wrist center
    assert np.allclose(pts[3], pts[4], atol=1e-12)
    assert np.allclose(pts[4], pts[5], atol=1e-12)


# --- inverse kinematics ---

def test_ik_fixpoint_at_solution_seed():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = random_joints(rng)
        pose = forward_kinematics(CFG, JointState(angles=q))
        sol = inverse_kinematics(CFG, pose, JointState(angles=q))
        assert np.allclose(sol.angles, q, atol=1e-9)


def test_ik_roundtrip_from_home():
    rng = np.random.default_rng(42)
    solved = 0
    for _ in range(100):
        q = random_joints(rng)
        pose = forward_kinematics(CFG, JointState(angles=q))
        try:
            sol = inverse_kinematics(CFG, pose, HOME)
        except UnreachableTargetError:
            continue
        got = forward_kinematics(CFG, sol)
        assert np.linalg.norm(got.position - pose.position) < 1e-6
        assert np.max(np.abs(got.orientation @ pose.orientation.T - np.eye(3))) < 1e-3
        solved += 1
    assert solved >= 99


def test_ik_unreachable_target_errors_with_residual():
    target = EndEffectorPose(position=np.array([1.1, 0.0, 0.1]), orientation=np.eye(3))
    with pytest.raises(UnreachableTargetError) as ei:
        inverse_kinematics(CFG, target, HOME)
    assert ei.value.position_error > 0.1
    assert len(ei.value.best_joints) == 6


def test_ik_rejects_invalid_rotation():
    bad = EndEffectorPose(position=np.array([0.2, 0.0, 0.2]),
                          orientation=np.eye(3) * 1.5)
    with pytest.raises(ValueError):
        inverse_kinematics(CFG, bad, HOME)


def test_ik_respects_joint_limits():
    rng = np.random.default_rng(8)
    lo = np.array([l for l, _ in CFG.joint_limits_deg])
    hi = np.array([h for _, h in CFG.joint_limits_deg])
    for _ in range(50):
        q = random_joints(rng)
        pose = forward_kinematics(CFG, JointState(angles=q))
        try:
            sol = inverse_kinematics(CFG, pose, HOME)
        except UnreachableTargetError:
            continue
        a = np.array(sol.angles)
        assert np.all(a >= lo - 1e-12) and np.all(a <= hi + 1e-12)


# --- jacobian ---

def test_jacobian_column_reproduces_single_joint_twist():
    rng = np.random.default_rng(5)
    q = random_joints(rng, margin=0.05)
    J = jacobian(CFG, JointState(angles=q))
    for i in range(6):
        w = 0.7  # rad/s on joint i alone
        h = 1e-7
        qp = list(q)
        qm = list(q)
        qp[i] += math.degrees(h)
        qm[i] -= math.degrees(h)
        pp = forward_kinematics(CFG, JointState(angles=tuple(qp))).position
        pm = forward_kinematics(CFG, JointState(angles=tuple(qm))).position
        v_fd = (pp - pm) / (2 * h) * w
        assert np.allclose(J[:3, i] * w, v_fd, atol=1e-5)


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(11)
    h = 1e-6  # rad
    hd = math.degrees(h)
    for _ in range(100):
        q = np.array(random_joints(rng, margin=0.01))
        J = jacobian(CFG, JointState(angles=tuple(q)))
        Jfd = np.zeros((6, 6))
        for i in range(6):
            qp = q.copy()
            qm = q.copy()
            qp[i] += hd
            qm[i] -= hd
            pp = forward_kinematics(CFG, JointState(angles=tuple(qp)))
            pm = forward_kinematics(CFG, JointState(angles=tuple(qm)))
            Jfd[:3, i] = (pp.position - pm.position) / (2 * h)
            W = (pp.orientation - pm.orientation) / (2 * h) @ pm.orientation.T
            Jfd[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
        assert np.max(np.abs(J - Jfd)) < 1e-5


def test_jacobian_singular_when_stretched():
    # Elbow straight and wrist aligned: multiple axes collapse.
    q = (0.0, 0.0, -30.0, 0.0, -30.0, 0.0)
    J = jacobian(CFG, JointState(angles=q))
    assert np.linalg.svd(J, compute_uv=False)[-1] < 1e-8


# --- angular momentum ---

def _single_link_config():
    # One moving link: joint 2 swings a 0.4 m rod of 1 kg; every other mass
    # sits exactly on the joint-2 anchor so it contributes nothing.
    return ArmConfig(
        rows=(
            DHRow(a=0.0, alpha_deg=-90.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.4, alpha_deg=0.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.0, alpha_deg=0.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.0, alpha_deg=0.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.0, alpha_deg=0.0, d=0.0, offset_deg=0.0),
            DHRow(a=0.0, alpha_deg=0.0, d=0.0, offset_deg=0.0),
        ),
        joint_limits_deg=((-180.0, 180.0),) * 6,
        link_masses=(3.3, 1.0, 0.0, 0.0, 0.0, 0.0),
        gripper_mass=0.0,
        gripper_reach=(0.0, 0.0, 0.0),
    )


def test_angular_momentum_static_is_zero():
    rng = np.random.default_rng(13)
    q = random_joints(rng)
    L = angular_momentum(CFG, JointState(angles=q))
    assert np.allclose(L, 0.0)


def test_angular_momentum_single_pendulum_closed_form():
    cfg = _single_link_config()
    omega = 1.0  # rad/s on joint 2
    st = JointState(angles=(0.0,) * 6,
                    velocities=(0.0, math.degrees(omega), 0.0, 0.0, 0.0, 0.0))
    L = angular_momentum(cfg, st)
    # point mass m=1 at r=0.2 about the (0,1,0) joint axis: m r^2 w = 0.04
    assert np.allclose(L, [0.0, 0.04, 0.0], atol=1e-9)


def test_angular_momentum_velocity_reversal_negates():
    rng = np.random.default_rng(17)
    q = random_joints(rng)
    v = tuple(rng.uniform(-90, 90, size=6))
    L1 = angular_momentum(CFG, JointState(angles=q, velocities=v))
    L2 = angular_momentum(CFG, JointState(angles=q, velocities=tuple(-x for x in v)))
    assert np.allclose(L1, -L2, atol=1e-12)


def test_angular_momentum_linear_in_velocity():
    rng = np.random.default_rng(19)
    q = random_joints(rng)
    v1 = rng.uniform(-60, 60, size=6)
    v2 = rng.uniform(-60, 60, size=6)
    La = angular_momentum(CFG, JointState(angles=q, velocities=tuple(v1)))
    Lb = angular_momentum(CFG, JointState(angles=q, velocities=tuple(v2)))
    Lab = angular_momentum(CFG, JointState(angles=q, velocities=tuple(v1 + v2)))
    assert np.allclose(La + Lb, Lab, atol=1e-10)
    L3 = angular_momentum(CFG, JointState(angles=q, velocities=tuple(3.0 * v1)))
    assert np.allclose(L3, 3.0 * La, atol=1e-10)


# --- power estimate ---

def test_power_static_arm_is_exactly_zero():
    rng = np.random.default_rng(23)
    q = random_joints(rng)
    assert power_estimate(CFG, JointState(angles=q)) == 0.0


def test_power_single_horizontal_link_closed_form():
    cfg = _single_link_config()
    st = JointState(angles=(0.0,) * 6,
                    velocities=(0.0, math.degrees(1.0), 0.0, 0.0, 0.0, 0.0))
    # |tau * omega| = m g r = 1 * 9.81 * 0.2
    assert math.isclose(power_estimate(cfg, st), 1.962, abs_tol=1e-12)


def test_power_doubles_with_speed():
    rng = np.random.default_rng(29)
    q = random_joints(rng)
    v = rng.uniform(-45, 45, size=6)
    p1 = power_estimate(CFG, JointState(angles=q, velocities=tuple(v)))
    p2 = power_estimate(CFG, JointState(angles=q, velocities=tuple(2.0 * v)))
    assert math.isclose(p2, 2.0 * p1, rel_tol=1e-12)


def test_power_never_negative():
    rng = np.random.default_rng(31)
    for _ in range(200):
        q = random_joints(rng)
        v = tuple(rng.uniform(-120, 120, size=6))
        assert power_estimate(CFG, JointState(angles=q, velocities=v)) >= 0.0


# --- config validation ---

def test_config_rejects_wrong_row_count():
    with pytest.raises(ValueError):
        ArmConfig(rows=(DHRow(0, 0, 0, 0),) * 5,
                  joint_limits_deg=((-1.0, 1.0),) * 6,
                  link_masses=(1.0,) * 6, gripper_mass=0.0,
                  gripper_reach=(0, 0, 0))


def test_config_rejects_bad_mass_total():
    with pytest.raises(ValueError):
        ArmConfig(rows=(DHRow(0, 0, 0, 0),) * 6,
                  joint_limits_deg=((-1.0, 1.0),) * 6,
                  link_masses=(1.0,) * 6, gripper_mass=0.0,
                  gripper_reach=(0, 0, 0))


def test_config_rejects_inverted_limits():
    with pytest.raises(ValueError):
        ArmConfig(rows=(DHRow(0, 0, 0, 0),) * 6,
                  joint_limits_deg=((1.0, -1.0),) * 6,
                  link_masses=(0.7,) * 6, gripper_mass=0.1,
                  gripper_reach=(0, 0, 0))


def test_joint_state_validates_lengths():
    with pytest.raises(ValueError):
        JointState(angles=(0.0,) * 5)
