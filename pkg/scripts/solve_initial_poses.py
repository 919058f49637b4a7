"""Solve the named arm configurations of the built-in robot.

Hand pointing down, finger spread along world x, fingertip center at the
listed positions. Prints arm joint vectors for robots._ARM_POSES.
"""

import re
import sys
from pathlib import Path

import numpy as np

from reactgrasp.kinematics import fingertip_jacobians, forward_kinematics
from reactgrasp.robots import NOMINAL_FINGER, default_robot

TARGETS = {
    "left_bottom": (0.40, 0.30, 0.12),
    "center_up": (0.50, 0.0, 0.38),
    "right_bottom": (0.40, -0.30, 0.12),
}


def solve(model, center, iters=500):
    q = np.concatenate([[0.0, 0.6, 0.0, 1.6, 0.0, 0.9, 0.0], NOMINAL_FINGER, NOMINAL_FINGER])
    R_des = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])  # palm x, y, z in world
    q_ref = q.copy()
    for _ in range(iters):
        kin = forward_kinematics(model, q)
        T = kin.joint_frames[6]
        c = kin.positions.mean(axis=0)
        jac = fingertip_jacobians(model, q, kin)
        Jc = 0.5 * (jac[0][0] + jac[1][0])
        Jr = jac[0][1]
        R = T[:3, :3]
        e_rot = 0.5 * sum(np.cross(R[:, k], R_des[:, k]) for k in range(3))
        err = np.r_[np.asarray(center) - c, e_rot]
        J = np.vstack([Jc, Jr])[:, :7]
        lam = 1e-3
        dq = J.T @ np.linalg.solve(J @ J.T + lam * np.eye(6), err)
        N = np.eye(7) - np.linalg.pinv(J) @ J
        dq += N @ (0.1 * (q_ref[:7] - q[:7]))
        q[:7] = np.clip(q[:7] + dq, model.q_min[:7] + 0.05, model.q_max[:7] - 0.05)
    return q, np.linalg.norm(err)


if __name__ == "__main__":
    m = default_robot()
    lines = []
    for name, c in TARGETS.items():
        q, e = solve(m, c)
        print(f"{name}: residual {e:.1e}")
        lines.append(f'    "{name}": {np.round(q[:7], 4).tolist()},')
    block = "_ARM_POSES = {\n" + "\n".join(lines) + "\n}"
    print(block)
    if "--write" in sys.argv:
        path = Path(__file__).resolve().parents[1] / "src" / "reactgrasp" / "robots.py"
        text = re.sub(r"_ARM_POSES = \{.*?\n\}", lambda _: block, path.read_text(), flags=re.S)
        path.write_text(text)
