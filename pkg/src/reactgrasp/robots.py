"""Built-in arm-hand model: a 7-DoF arm carrying a two-finger, 8-DoF hand.

Link lengths loosely follow a common 7-DoF research arm (shoulder height
0.333 m, upper arm 0.316 m, forearm 0.384 m). Each finger has an abduction
joint followed by three flexion joints; the fingertip contact pad faces the
other finger along the fingertip frame's (x + y) direction.
"""

from __future__ import annotations

import numpy as np

from .kinematics import CollisionSphere, Fingertip, Joint, RobotModel, make_transform, rpy_to_matrix

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

FINGER_BASE_OFFSET = 0.035
PROXIMAL, MIDDLE, DISTAL = 0.05, 0.04, 0.03

#: loosely open posture (abduction, flex1, flex2, flex3) for each finger:
#: fingertips 7.8 cm apart with the contact pads facing each other
NOMINAL_FINGER = np.array([0.0, -0.0801, 0.0801, 0.0])

# Solved once by damped least squares with the hand pointing down (see
# scripts/solve_initial_poses.py); fingertip centers at roughly
# (0.40, +0.30, 0.12), (0.50, 0, 0.38) and (0.40, -0.30, 0.12), finger
# spread along world x.
_ARM_POSES = {
    "left_bottom": [0.7427, 0.5061, -0.1296, 1.5063, 0.0692, 1.1337, 2.1707],
    "center_up": [0.1267, 0.4127, -0.2047, 0.9435, 0.0837, 1.7923, 1.528],
    "right_bottom": [-0.3398, 0.5338, -0.4008, 1.5063, 0.2196, 1.1462, 0.7894],
}


def _j(axis, xyz, parent, name, rpy=(0.0, 0.0, 0.0)):
    return Joint(np.asarray(axis, dtype=float), make_transform(rpy_to_matrix(rpy), xyz), parent, name)


def default_robot() -> RobotModel:
    joints = [
        _j(Z, (0, 0, 0.333), -1, "arm0"),
        _j(Y, (0, 0, 0), 0, "arm1"),
        _j(Z, (0, 0, 0.316), 1, "arm2"),
        _j(Y, (0, 0, 0), 2, "arm3"),
        _j(Z, (0, 0, 0.384), 3, "arm4"),
        _j(Y, (0, 0, 0), 4, "arm5"),
        _j(Z, (0, 0, 0.107), 5, "arm6"),
    ]
    tips = []
    groups = []
    for side, sign in (("a", 1.0), ("b", -1.0)):
        base = len(joints)
        flex_axis = X * sign  # positive flexion curls toward the other finger
        joints += [
            _j(Y, (0, sign * FINGER_BASE_OFFSET, 0.08), 6, f"{side}_abd"),
            _j(flex_axis, (0, 0, 0.02), base, f"{side}_flex1"),
            _j(flex_axis, (0, 0, PROXIMAL), base + 1, f"{side}_flex2"),
            _j(flex_axis, (0, 0, MIDDLE), base + 2, f"{side}_flex3"),
        ]
        groups.append(list(range(base, base + 4)))
        yaw = -0.75 * np.pi if sign > 0 else 0.25 * np.pi
        tips.append(Fingertip(base + 3, make_transform(rpy_to_matrix((0, 0, yaw)), (0, 0, DISTAL)), f"tip_{side}"))

    s = CollisionSphere
    spheres = [
        s(-1, np.array([0.0, 0.0, 0.12]), 0.08),  # base column
        s(0, np.array([0.0, 0.0, 0.0]), 0.07),  # shoulder
        s(1, np.array([0.0, 0.0, 0.10]), 0.06),
        s(1, np.array([0.0, 0.0, 0.20]), 0.06),
        s(2, np.array([0.0, 0.0, 0.0]), 0.06),  # elbow
        s(3, np.array([0.0, 0.0, 0.13]), 0.05),
        s(3, np.array([0.0, 0.0, 0.26]), 0.05),
        s(4, np.array([0.0, 0.0, 0.0]), 0.05),  # wrist
        s(6, np.array([0.0, 0.0, 0.02]), 0.045),  # hand body
        s(6, np.array([0.0, 0.03, 0.065]), 0.028),
        s(6, np.array([0.0, -0.03, 0.065]), 0.028),
    ]
    for g in groups:
        spheres += [
            s(g[1], np.array([0.0, 0.0, 0.028]), 0.014),
            s(g[2], np.array([0.0, 0.0, 0.022]), 0.012),
            s(g[3], np.array([0.0, 0.0, 0.012]), 0.011),
            s(g[3], np.array([0.0, 0.0, DISTAL]), 0.010),
        ]
    # every sphere that can move relative to the world checks against objects
    hand = [i for i, sp in enumerate(spheres) if sp.parent >= 1]

    n = len(joints)
    q_min = np.array([-2.9, -1.8, -2.9, -0.5, -2.9, -2.5, -2.9] + [-0.4, -0.7, -0.3, -0.3] * 2)
    q_max = np.array([2.9, 1.8, 2.9, 2.8, 2.9, 2.5, 2.9] + [0.4, 1.3, 1.6, 1.6] * 2)
    qd_max = np.array([1.2, 1.2, 1.2, 1.2, 1.8, 1.8, 1.8] + [2.5] * 8)
    assert n == 15

    model = RobotModel(
        joints=joints,
        fingertips=tips,
        collision_spheres=spheres,
        gripper_joint_indices=list(range(7, 15)),
        q_min=q_min,
        q_max=q_max,
        qd_min=-qd_max,
        qd_max=qd_max,
        hand_sphere_indices=hand,
        finger_joint_groups=groups,
        name="arm7_hand8",
    )
    for name, arm in _ARM_POSES.items():
        model.named_configurations[name] = np.concatenate([arm, NOMINAL_FINGER, NOMINAL_FINGER])
    return model


def nominal_gripper(model: RobotModel) -> np.ndarray:
    """Loosely open gripper posture used as the posture-field attractor."""
    return np.tile(NOMINAL_FINGER, len(model.gripper_joint_indices) // 4)


def default_self_pairs(model: RobotModel) -> list[tuple[int, int]]:
    """Self-collision sphere pairs: finger vs finger, hand vs upper arm and base."""
    par = model._sphere_parent
    groups = model.finger_joint_groups
    fingers = [[i for i, p in enumerate(par) if p in g] for g in groups]
    hand = [i for i, p in enumerate(par) if p >= 6]
    upper = [i for i, p in enumerate(par) if p <= 2]
    fore = [i for i, p in enumerate(par) if p == 3]
    low = [i for i, p in enumerate(par) if p <= 0]
    pairs = []
    for a in range(len(fingers)):
        for b in range(a + 1, len(fingers)):
            pairs += [(i, j) for i in fingers[a] for j in fingers[b]]
    pairs += [(i, j) for i in hand for j in upper]
    pairs += [(i, j) for i in fore for j in low]
    return pairs
