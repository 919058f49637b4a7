"""Serial-chain forward kinematics and geometric Jacobians.

The robot is a tree of revolute joints. Each joint frame is obtained from its
parent frame by a fixed origin transform followed by a rotation about the
joint axis. Fingertip frames and collision spheres are rigidly attached to a
joint frame (or to the base when the parent index is -1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np


class ConfigurationError(ValueError):
    """Raised on malformed robot descriptions or mismatched joint vectors."""


def skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def unskew(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def rpy_to_matrix(rpy: Sequence[float]) -> np.ndarray:
    """URDF convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def axis_angle(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    K = skew(axis)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def make_transform(R: np.ndarray, p: Sequence[float]) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray
    origin: np.ndarray  # 4x4, parent joint frame -> this joint frame at q=0
    parent: int = -1
    name: str = ""


@dataclass(frozen=True)
class Fingertip:
    parent: int
    offset: np.ndarray  # 4x4
    name: str = ""


@dataclass(frozen=True)
class CollisionSphere:
    parent: int
    center: np.ndarray  # in the parent joint frame
    radius: float


@dataclass
class RobotModel:
    """Revolute tree with fingertip frames, collision spheres and limits.

    ``gripper_joint_indices`` defines the selection matrix that extracts the
    gripper joints from the full joint vector; ``hand_sphere_indices`` names
    the spheres standing in for the gripper geometry in object distance rows.
    """

    joints: list[Joint]
    fingertips: list[Fingertip]
    collision_spheres: list[CollisionSphere]
    gripper_joint_indices: list[int]
    q_min: np.ndarray
    q_max: np.ndarray
    qd_min: np.ndarray
    qd_max: np.ndarray
    hand_sphere_indices: list[int] = field(default_factory=list)
    finger_joint_groups: list[list[int]] = field(default_factory=list)
    named_configurations: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = "robot"

    def __post_init__(self):
        n = len(self.joints)
        for k, j in enumerate(self.joints):
            if not -1 <= j.parent < k:
                raise ConfigurationError(f"joint {k}: parent {j.parent} must precede it")
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ConfigurationError(f"joint {k}: axis is not unit norm")
        idx = list(self.gripper_joint_indices)
        if len(set(idx)) != len(idx) or any(not 0 <= i < n for i in idx):
            raise ConfigurationError("gripper joint indices must be distinct and in range")
        for name in ("q_min", "q_max", "qd_min", "qd_max"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ConfigurationError(f"{name} must have length {n}")
            setattr(self, name, arr)
        if np.any(self.q_min >= self.q_max):
            raise ConfigurationError("q_min must be strictly below q_max")
        if np.any(self.qd_min > self.qd_max):
            raise ConfigurationError("qd_min must not exceed qd_max")
        for s in self.collision_spheres:
            if s.radius <= 0:
                raise ConfigurationError("sphere radii must be positive")
            if not -1 <= s.parent < n:
                raise ConfigurationError("sphere parent out of range")
        for f in self.fingertips:
            if not -1 <= f.parent < n:
                raise ConfigurationError("fingertip parent out of range")
        if not self.hand_sphere_indices:
            self.hand_sphere_indices = list(range(len(self.collision_spheres)))
        self.named_configurations = {
            k: np.asarray(v, dtype=float) for k, v in self.named_configurations.items()
        }
        # ancestor mask: chain[j, k] is True when joint k moves joint frame j
        chain = np.zeros((n, n), dtype=bool)
        for k, j in enumerate(self.joints):
            if j.parent >= 0:
                chain[k] = chain[j.parent]
            chain[k, k] = True
        self._chain = chain
        self._axes = np.array([j.axis for j in self.joints]).reshape(n, 3)
        self._origins = np.array([j.origin for j in self.joints]).reshape(n, 4, 4)
        self._parents = [j.parent for j in self.joints]
        self._parent_arr = np.array(self._parents, dtype=np.int64)
        self._K = np.array([skew(a) for a in self._axes]).reshape(n, 3, 3)
        self._KK = self._K @ self._K
        self._sphere_parent = np.array([s.parent for s in self.collision_spheres], dtype=int)
        self._sphere_local = np.array([s.center for s in self.collision_spheres]).reshape(-1, 3)
        self.sphere_radii = np.array([s.radius for s in self.collision_spheres])

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def m(self) -> int:
        return len(self.fingertips)

    @property
    def selection_matrix(self) -> np.ndarray:
        S = np.zeros((len(self.gripper_joint_indices), self.n))
        S[np.arange(len(self.gripper_joint_indices)), self.gripper_joint_indices] = 1.0
        return S

    def chain_mask(self, parent: int) -> np.ndarray:
        """Boolean mask of joints that move a frame attached to ``parent``."""
        if parent < 0:
            return np.zeros(self.n, dtype=bool)
        return self._chain[parent]

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ConfigurationError(f"expected joint vector of length {self.n}, got shape {q.shape}")
        return q


@dataclass(frozen=True)
class FingertipState:
    x: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class KinematicsResult:
    """Everything computed from one configuration."""

    q: np.ndarray
    joint_frames: np.ndarray  # (n, 4, 4) world <- joint
    fingertips: list[FingertipState]
    sphere_centers: np.ndarray  # (s, 3) world

    @property
    def positions(self) -> np.ndarray:
        return np.array([f.x for f in self.fingertips])


def _joint_frames(model: RobotModel, q: np.ndarray) -> np.ndarray:
    return _chain_frames(model._origins, model._K, model._KK, model._parent_arr, np.ascontiguousarray(q, dtype=float))


@numba.njit(cache=True)
def _chain_frames(origins, K, KK, parents, q):
    # Rodrigues per joint, then the chain products parent-first
    n = q.size
    frames = np.empty((n, 4, 4))
    rot = np.empty((3, 3))
    local = np.empty((4, 4))
    for k in range(n):
        s = np.sin(q[k])
        c = 1.0 - np.cos(q[k])
        for i in range(3):
            for j in range(3):
                rot[i, j] = (1.0 if i == j else 0.0) + s * K[k, i, j] + c * KK[k, i, j]
        local[:, :] = origins[k]
        for i in range(3):
            for j in range(3):
                local[i, j] = origins[k, i, 0] * rot[0, j] + origins[k, i, 1] * rot[1, j] + origins[k, i, 2] * rot[2, j]
        p = parents[k]
        if p < 0:
            frames[k] = local
        else:
            for i in range(4):
                for j in range(4):
                    acc = 0.0
                    for m in range(4):
                        acc += frames[p, i, m] * local[m, j]
                    frames[k, i, j] = acc
    return frames


def _attach(frames: np.ndarray, parent: int, T: np.ndarray) -> np.ndarray:
    return T if parent < 0 else frames[parent] @ T


def forward_kinematics(model: RobotModel, q) -> KinematicsResult:
    """Fingertip poses and world sphere centers at configuration ``q``."""
    q = model.check_q(q)
    frames = _joint_frames(model, q)
    tips = []
    for f in model.fingertips:
        T = _attach(frames, f.parent, f.offset)
        tips.append(FingertipState(T[:3, 3].copy(), T[:3, :3].copy()))
    centers = np.empty((len(model.collision_spheres), 3))
    if len(centers):
        par = model._sphere_parent
        loc = model._sphere_local
        base = par < 0
        centers[base] = loc[base]
        moving = ~base
        if moving.any():
            F = frames[par[moving]]
            centers[moving] = np.einsum("kij,kj->ki", F[:, :3, :3], loc[moving]) + F[:, :3, 3]
    return KinematicsResult(q, frames, tips, centers)


def _point_jacobian(model: RobotModel, frames: np.ndarray, parent: int, p: np.ndarray) -> np.ndarray:
    J = np.zeros((3, model.n))
    mask = model.chain_mask(parent)
    if not mask.any():
        return J
    z = np.einsum("kij,kj->ki", frames[mask, :3, :3], model._axes[mask])
    o = frames[mask, :3, 3]
    J[:, mask] = np.cross(z, p - o).T
    return J


def _rot_jacobian(model: RobotModel, frames: np.ndarray, parent: int) -> np.ndarray:
    J = np.zeros((3, model.n))
    mask = model.chain_mask(parent)
    if mask.any():
        J[:, mask] = np.einsum("kij,kj->ki", frames[mask, :3, :3], model._axes[mask]).T
    return J


def fingertip_jacobians(model: RobotModel, q, kin: KinematicsResult | None = None):
    """Per-fingertip (J^x, J^R), each 3 x n, in world coordinates.

    ``xdot = Jx @ qdot`` and ``Rdot @ R.T = skew(JR @ qdot)``.
    """
    if kin is None:
        kin = forward_kinematics(model, q)
    else:
        model.check_q(q)
    out = []
    for f, st in zip(model.fingertips, kin.fingertips):
        out.append(
            (
                _point_jacobian(model, kin.joint_frames, f.parent, st.x),
                _rot_jacobian(model, kin.joint_frames, f.parent),
            )
        )
    return out


def point_jacobian(model: RobotModel, q, sphere_index: int, kin: KinematicsResult | None = None):
    """3 x n Jacobian of a collision-sphere center."""
    if kin is None:
        kin = forward_kinematics(model, q)
    s = model.collision_spheres[sphere_index]
    return _point_jacobian(model, kin.joint_frames, s.parent, kin.sphere_centers[sphere_index])


def sphere_jacobians(model: RobotModel, kin: KinematicsResult, indices=None) -> np.ndarray:
    """Stacked (len(indices), 3, n) Jacobians of sphere centers."""
    if indices is None:
        indices = range(len(model.collision_spheres))
    indices = list(indices)
    if not indices:
        return np.zeros((0, 3, model.n))
    idx = np.asarray(indices)
    par = model._sphere_parent[idx]
    p = kin.sphere_centers[idx]
    F = kin.joint_frames
    z = np.einsum("kij,kj->ki", F[:, :3, :3], model._axes)  # world joint axes
    o = F[:, :3, 3]
    # (s, n, 3) cross products, masked by chain membership
    cr = np.cross(z[None, :, :], p[:, None, :] - o[None, :, :])
    mask = np.zeros((len(idx), model.n), dtype=bool)
    has = par >= 0
    mask[has] = model._chain[par[has]]
    cr[~mask] = 0.0
    return np.transpose(cr, (0, 2, 1))


# ---------------------------------------------------------------------------
# Robot description files


def robot_to_dict(model: RobotModel) -> dict:
    def tf(T):
        R = T[:3, :3]
        # recover URDF rpy from the rotation
        pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
        if abs(np.cos(pitch)) > 1e-9:
            roll = np.arctan2(R[2, 1], R[2, 2])
            yaw = np.arctan2(R[1, 0], R[0, 0])
        else:
            roll = np.arctan2(-R[1, 2], R[1, 1])
            yaw = 0.0
        return {"origin_xyz": T[:3, 3].tolist(), "origin_rpy": [roll, pitch, yaw]}

    return {
        "name": model.name,
        "joints": [
            {"name": j.name, "axis": j.axis.tolist(), "parent": j.parent, **tf(j.origin)}
            for j in model.joints
        ],
        "fingertips": [{"name": f.name, "parent": f.parent, **tf(f.offset)} for f in model.fingertips],
        "collision_spheres": [
            {"parent": s.parent, "center": s.center.tolist(), "radius": s.radius}
            for s in model.collision_spheres
        ],
        "gripper_joints": list(model.gripper_joint_indices),
        "finger_joint_groups": [list(g) for g in model.finger_joint_groups],
        "hand_spheres": list(model.hand_sphere_indices),
        "limits": {
            "q_min": model.q_min.tolist(),
            "q_max": model.q_max.tolist(),
            "qd_min": model.qd_min.tolist(),
            "qd_max": model.qd_max.tolist(),
        },
        "named_configurations": {k: v.tolist() for k, v in model.named_configurations.items()},
    }


def robot_from_dict(data: dict) -> RobotModel:
    try:
        joints = []
        for j in data["joints"]:
            axis = np.asarray(j["axis"], dtype=float)
            norm = np.linalg.norm(axis)
            if norm == 0:
                raise ConfigurationError("zero joint axis")
            T = make_transform(rpy_to_matrix(j.get("origin_rpy", [0, 0, 0])), j.get("origin_xyz", [0, 0, 0]))
            joints.append(Joint(axis / norm, T, int(j.get("parent", -1)), j.get("name", "")))
        tips = [
            Fingertip(
                int(f["parent"]),
                make_transform(rpy_to_matrix(f.get("origin_rpy", [0, 0, 0])), f.get("origin_xyz", [0, 0, 0])),
                f.get("name", ""),
            )
            for f in data["fingertips"]
        ]
        spheres = [
            CollisionSphere(int(s["parent"]), np.asarray(s["center"], dtype=float), float(s["radius"]))
            for s in data.get("collision_spheres", [])
        ]
        lim = data["limits"]
        return RobotModel(
            joints=joints,
            fingertips=tips,
            collision_spheres=spheres,
            gripper_joint_indices=list(data.get("gripper_joints", [])),
            q_min=lim["q_min"],
            q_max=lim["q_max"],
            qd_min=lim["qd_min"],
            qd_max=lim["qd_max"],
            hand_sphere_indices=list(data.get("hand_spheres", [])),
            finger_joint_groups=[list(g) for g in data.get("finger_joint_groups", [])],
            named_configurations=data.get("named_configurations", {}),
            name=data.get("name", "robot"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed robot description: {exc!r}") from exc


def load_robot(path) -> RobotModel:
    with open(path) as fh:
        return robot_from_dict(json.load(fh))


def save_robot(model: RobotModel, path) -> None:
    Path(path).write_text(json.dumps(robot_to_dict(model), indent=2))
