import itertools
import logging

import numpy as np
import pytest

from reactgrasp.fields import VelocityTargets
from reactgrasp.geometry import CollisionPairSet, build_collision_pairs, gamma
from reactgrasp.kinematics import (
    CollisionSphere, Fingertip, Joint, RobotModel, fingertip_jacobians, forward_kinematics, make_transform,
)
from reactgrasp.robots import default_self_pairs
from reactgrasp.scenes import table
from reactgrasp.tracker import ABORTED, Tracker, TrackerParams, row_violation

Z = np.array([0.0, 0.0, 1.0])
Y = np.array([0.0, 1.0, 0.0])


def planar(n=3, limit=np.pi, qd=1.0):
    joints = [Joint(Z, make_transform(np.eye(3), (0, 0, 0) if k == 0 else (0.2, 0, 0)), k - 1) for k in range(n)]
    tip = Fingertip(n - 1, make_transform(np.eye(3), (0.2, 0, 0)))
    return RobotModel(joints, [tip], [], [], -limit * np.ones(n), limit * np.ones(n), -qd * np.ones(n), qd * np.ones(n))


def two_finger_6dof(qd=0.5):
    """Base yaw joint carrying two 2-joint fingers plus a wrist joint on each side."""
    j = [Joint(Z, np.eye(4), -1)]
    tips = []
    for sign in (1.0, -1.0):
        b = len(j)
        j += [Joint(Y, make_transform(np.eye(3), (0, sign * 0.05, 0.1)), 0),
              Joint(Y, make_transform(np.eye(3), (0, 0, 0.1)), b)]
        tips.append(Fingertip(b + 1, make_transform(np.eye(3), (0, 0, 0.08))))
    j.append(Joint(Z, make_transform(np.eye(3), (0, 0, 0.05)), 0))
    n = len(j)
    return RobotModel(j, tips, [], [1, 2, 3, 4], -1e3 * np.ones(n), 1e3 * np.ones(n), -qd * np.ones(n), qd * np.ones(n))


def targets(model, xdot, omega=None, qgr=None, alpha=0.0, beta=0.0):
    m = model.m
    return VelocityTargets(np.asarray(xdot, float).reshape(m, 3),
                           np.zeros((m, 3)) if omega is None else np.asarray(omega, float).reshape(m, 3),
                           np.zeros(len(model.gripper_joint_indices)) if qgr is None else np.asarray(qgr, float),
                           alpha, beta, 0, np.zeros((m, 3)))


def empty_pairs():
    return CollisionPairSet(np.zeros((0, 2), dtype=int), np.zeros((0, 2), dtype=int))


def test_damped_least_squares_closed_form():
    model = planar()
    q = np.array([0.3, 0.5, -0.4])
    tr = Tracker(model, empty_pairs(), [])
    xd = np.array([0.02, -0.01, 0.0])
    out = tr.step(q, targets(model, xd), [])
    Jx, _ = fingertip_jacobians(model, q)[0]
    lam = tr.params.reg
    ref = np.linalg.solve(Jx.T @ Jx + lam * np.eye(3), Jx.T @ xd)
    assert out.status == "solved"
    assert np.allclose(out.qdot, ref, atol=1e-8)


def test_zero_targets_give_zero_velocity(robot):
    env = [table()]
    tr = Tracker(robot, build_collision_pairs(robot, default_self_pairs(robot), env), env)
    out = tr.step(robot.named_configurations["center_up"], targets(robot, np.zeros((2, 3))), [])
    assert np.abs(out.qdot).max() < 1e-8


def test_joint_limit_blocks_motion():
    model = planar(limit=1.0)
    q = np.array([1.0, 0.2, 0.2])  # joint 0 at its upper limit
    kin = forward_kinematics(model, q)
    x = kin.positions[0]
    push = np.cross(Z, x)  # ccw motion needs a positive joint-0 rate
    out = Tracker(model, empty_pairs(), []).step(q, targets(model, 0.1 * push / np.linalg.norm(push)), [])
    assert out.qdot[0] <= 1e-8
    H = TrackerParams().horizon
    assert np.all(q + out.qdot * H <= model.q_max + 1e-9)


def test_table_row_blocks_descent():
    spheres = [CollisionSphere(2, np.array([0.2, 0, 0]), 0.02)]
    joints = [Joint(Y, make_transform(np.eye(3), (0, 0, 0.2)), -1), Joint(Y, make_transform(np.eye(3), (0.2, 0, 0)), 0),
              Joint(Y, make_transform(np.eye(3), (0.2, 0, 0)), 1)]
    model = RobotModel(joints, [Fingertip(2, make_transform(np.eye(3), (0.2, 0, 0)))], spheres, [],
                       -np.pi * np.ones(3), np.pi * np.ones(3), -np.ones(3), np.ones(3))
    env = [table()]
    # bend until the sphere sits eps_gamma above the table
    prm = TrackerParams()
    from scipy.optimize import brentq
    f = lambda a: forward_kinematics(model, np.array([a, 0.0, 0.0])).sphere_centers[0][2] - 0.02 - prm.eps_gamma
    a = brentq(f, 0.0, 1.5)
    q = np.array([a, 0.0, 0.0])
    pairs = build_collision_pairs(model, [], env)
    out = Tracker(model, pairs, env, prm).step(q, targets(model, [0, 0, -0.2]), [])
    st_ = gamma(model, forward_kinematics(model, q), pairs, env)
    assert st_.values[0] == pytest.approx(prm.eps_gamma, abs=1e-9)
    assert st_.jacobian[0] @ out.qdot >= -1e-8


def test_homogeneity_without_constraints(rng):
    model = two_finger_6dof(qd=1e3)
    q = rng.uniform(-0.5, 0.5, model.n)
    tr = Tracker(model, empty_pairs(), [])
    base = targets(model, rng.normal(size=(2, 3)) * 0.05, rng.normal(size=(2, 3)) * 0.1, rng.normal(size=4) * 0.1, 0.4, 0.7)
    q1 = tr.step(q, base, []).qdot
    s = 2.5
    scaled = targets(model, s * base.xdot_des, s * base.omega_des, s * base.qdot_gr_des, 0.4, 0.7)
    tr.reset()
    q2 = tr.step(q, scaled, []).qdot
    assert np.allclose(q2, s * q1, atol=1e-7)


def test_zero_weights_ignore_their_targets(rng):
    model = two_finger_6dof()
    q = rng.uniform(-0.5, 0.5, model.n)
    xd = rng.normal(size=(2, 3)) * 0.05
    a = Tracker(model, empty_pairs(), []).step(q, targets(model, xd, np.zeros((2, 3)), np.zeros(4)), []).qdot
    b = Tracker(model, empty_pairs(), []).step(q, targets(model, xd, rng.normal(size=(2, 3)), rng.normal(size=4)), []).qdot
    assert np.allclose(a, b, atol=1e-12)


def test_conflicting_targets_match_enumeration():
    """Fingers pulled apart faster than the velocity box allows: compare with box active-set enumeration."""
    model = two_finger_6dof(qd=0.3)
    q = np.array([0.1, 0.2, -0.1, -0.2, 0.1, 0.05])
    kin = forward_kinematics(model, q)
    x = kin.positions
    apart = x[0] - x[1]
    xd = np.stack([apart, -apart]) / np.linalg.norm(apart) * 0.5
    tr = Tracker(model, empty_pairs(), [])
    out = tr.step(q, targets(model, xd), [])
    jacs = fingertip_jacobians(model, q, kin)
    A = np.vstack([Jx for Jx, _ in jacs])
    b = xd.ravel()
    reg = tr.params.reg
    cost = lambda v: float(np.sum((A @ v - b) ** 2) + reg * v @ v)
    H = A.T @ A + reg * np.eye(model.n)
    g = A.T @ b
    best = np.inf
    for combo in itertools.product((None, -1, 1), repeat=model.n):
        fixed = [k for k in range(model.n) if combo[k] is not None]
        free = [k for k in range(model.n) if combo[k] is None]
        v = np.zeros(model.n)
        for k in fixed:
            v[k] = combo[k] * 0.3
        if free:
            rhs = g[free] - H[np.ix_(free, fixed)] @ v[fixed]
            v[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.all(np.abs(v) <= 0.3 + 1e-12):
            best = min(best, cost(v))
    assert np.abs(out.qdot).max() <= 0.3 + 1e-6
    assert cost(out.qdot) == pytest.approx(best, abs=1e-6)


def test_free_space_reach_equals_regularized_least_squares(robot, rng):
    env = [table()]
    tr = Tracker(robot, build_collision_pairs(robot, default_self_pairs(robot), env), env)
    q = robot.named_configurations["center_up"]
    J = np.vstack([Jx for Jx, _ in fingertip_jacobians(robot, q)])
    for _ in range(20):
        xd = np.tile(rng.normal(size=3) * 0.05, (2, 1))
        out = tr.step(q, targets(robot, xd), [])
        ref = np.linalg.solve(J.T @ J + tr.params.reg * np.eye(robot.n), J.T @ xd.ravel())
        assert np.allclose(out.qdot, ref, atol=1e-9)


@pytest.mark.parametrize("pose", ["left_bottom", "center_up", "right_bottom"])
def test_free_space_reach_tracks_targets(robot, pose):
    """Hand translation at the full field speed, tracked to 1e-3 m/s per fingertip."""
    env = [table()]
    tr = Tracker(robot, build_collision_pairs(robot, default_self_pairs(robot), env), env)
    q = robot.named_configurations[pose]
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        d = rng.normal(size=3)
        xd = np.tile(0.25 * d / np.linalg.norm(d), (2, 1))
        out = tr.step(q, targets(robot, xd), [])
        assert out.status == "solved"
        for i, (Jx, _) in enumerate(fingertip_jacobians(robot, q)):
            worst = max(worst, float(np.linalg.norm(Jx @ out.qdot - xd[i])))
    assert worst <= 1e-3


def test_solved_ticks_satisfy_rows(robot, rng):
    env = [table()]
    tr = Tracker(robot, build_collision_pairs(robot, default_self_pairs(robot), env), env)
    H = tr.params.horizon
    for _ in range(30):
        q = np.clip(robot.named_configurations["center_up"] + rng.normal(size=robot.n) * 0.3, robot.q_min, robot.q_max)
        out = tr.step(q, targets(robot, rng.normal(size=(2, 3)) * 0.3), [])
        if out.status == "primal_infeasible":
            continue
        assert row_violation(tr.last_qp.problem, out.qdot) <= 1e-5
        assert np.all(out.qdot <= robot.qd_max + 1e-6) and np.all(out.qdot >= robot.qd_min - 1e-6)
        assert np.all(q + out.qdot * H <= robot.q_max + 1e-6) and np.all(q + out.qdot * H >= robot.q_min - 1e-6)


def test_nan_target_reuses_previous_command(caplog):
    model = planar()
    q = np.array([0.3, 0.5, -0.4])
    tr = Tracker(model, empty_pairs(), [])
    first = tr.step(q, targets(model, [0.02, 0.0, 0.0]), [])
    with caplog.at_level(logging.ERROR):
        bad = tr.step(q, targets(model, [np.nan, 0.0, 0.0]), [])
    assert bad.status == ABORTED
    assert np.array_equal(bad.qdot, first.qdot)
    assert "nonfinite_problem" in bad.flags
    assert any("non-finite" in r.message for r in caplog.records)


def test_infeasible_rows_command_zero(robot):
    env = [table(offset=0.6)]  # the table surface above most of the arm
    pairs = build_collision_pairs(robot, [], env)
    tr = Tracker(robot, pairs, env)
    out = tr.step(robot.named_configurations["center_up"], targets(robot, np.zeros((2, 3))), [])
    assert out.status == "primal_infeasible"
    assert np.all(out.qdot == 0) and "infeasible" in out.flags
