"""Signed distances for objects and the robot's collision distance stacks.

Objects are immutable snapshots: a shape expressed in its own frame plus a
world pose. Moving an object means building a new snapshot with
:meth:`SdfObject.with_pose`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy.spatial import cKDTree

from .kinematics import KinematicsResult, RobotModel, sphere_jacobians

log = logging.getLogger(__name__)

TARGET, OBSTACLE, ENVIRONMENT = "target", "obstacle", "environment"

#: default clearance margins by role (m)
DEFAULT_MARGINS = {TARGET: 0.01, OBSTACLE: 0.05, ENVIRONMENT: 0.005}


@dataclass(frozen=True)
class Superellipsoid:
    a: float
    b: float
    c: float
    e1: float = 1.0
    e2: float = 1.0

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("superellipsoid semi-axes must be positive")
        if not (0 < self.e1 <= 2 and 0 < self.e2 <= 2):
            raise ValueError("superellipsoid exponents must lie in (0, 2]")

    @property
    def bound_radius(self) -> float:
        """Radius of a sphere about the origin that contains the surface."""
        return float(np.sqrt(self.a**2 + self.b**2 + self.c**2))

    def local_eval(self, p: np.ndarray, cutoff: float | None = None):
        """Radial distance approximation ``|p| (1 - F(p)^(-e1/2))``.

        Exact for spheres; negative inside. Returns values and gradients.
        With ``cutoff``, points provably farther than it report ``inf`` and a
        zero gradient.
        """
        if cutoff is None:
            return self._eval(p)
        # the radial value is at least |p| minus the bounding radius
        near = np.linalg.norm(p, axis=1) - self.bound_radius <= cutoff
        val = np.full(len(p), np.inf)
        grad = np.zeros_like(p)
        if near.any():
            val[near], grad[near] = self._eval(p[near])
        return val, grad

    def _eval(self, p):
        return _superellipsoid_eval(np.ascontiguousarray(p, dtype=float), self.a, self.b, self.c, self.e1, self.e2)


@numba.njit(cache=True)
def _superellipsoid_eval(p, a, b, c, e1, e2):
    n = p.shape[0]
    val = np.empty(n)
    grad = np.zeros((n, 3))
    tiny = 1e-300
    kx = 2.0 / e2
    kz = 2.0 / e1
    r = e2 / e1
    for i in range(n):
        x, y, z = p[i, 0], p[i, 1], p[i, 2]
        ax, ay, az = abs(x) / a, abs(y) / b, abs(z) / c
        u = max(ax**kx + ay**kx, tiny)
        F = max(u**r + az**kz, tiny)
        rho = np.sqrt(x * x + y * y + z * z)
        Fk = F ** (-e1 / 2.0)
        val[i] = rho * (1.0 - Fk)
        if rho == 0.0:
            # the radial value tends to minus the center-to-surface distance,
            # which depends on direction; report the smallest (conservative)
            val[i] = -min(a, b, c)
            continue
        # dF/dp
        du = r * u ** (r - 1.0)
        gx = du * kx * ax ** (kx - 1.0) * np.sign(x) / a if ax > 0 else 0.0
        gy = du * kx * ay ** (kx - 1.0) * np.sign(y) / b if ay > 0 else 0.0
        gz = kz * az ** (kz - 1.0) * np.sign(z) / c if az > 0 else 0.0
        radial = (1.0 - Fk) / rho
        scale = rho * (e1 / 2.0) * Fk / F
        grad[i, 0] = x * radial + scale * gx
        grad[i, 1] = y * radial + scale * gy
        grad[i, 2] = z * radial + scale * gz
    return val, grad


class PointCloud:
    """Unsigned nearest-point distance to a surface point cloud."""

    def __init__(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        if len(pts) == 0:
            raise ValueError("point cloud must be non-empty")
        self.points = pts
        self._tree = cKDTree(pts)

    def nearest(self, p: np.ndarray, cutoff: float | None = None):
        """Nearest distances and indices; beyond ``cutoff`` the distance is inf and the index is len(points)."""
        bound = np.inf if cutoff is None else max(float(cutoff), 0.0)
        d, idx = self._tree.query(p, k=1, distance_upper_bound=bound)
        return np.asarray(d, dtype=float), np.asarray(idx, dtype=int)

    def local_values(self, p: np.ndarray) -> np.ndarray:
        return self._tree.query(p, k=1)[0]

    def local_eval(self, p: np.ndarray, cutoff: float | None = None):
        d, idx = self.nearest(p, cutoff)
        grad = np.zeros_like(p)
        hit = np.isfinite(d) & (d > 0)
        grad[hit] = (p[hit] - self.points[idx[hit]]) / d[hit, None]
        return d, grad

    def __repr__(self):
        return f"PointCloud({len(self.points)} points)"


@dataclass(frozen=True)
class HalfSpace:
    """Free side is ``normal . x >= offset``."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("half-space normal must be unit norm")

    def local_eval(self, p: np.ndarray, cutoff: float | None = None):
        n = np.asarray(self.normal, dtype=float)
        return p @ n - self.offset, np.broadcast_to(n, p.shape).copy()

    def local_values(self, p: np.ndarray) -> np.ndarray:
        return p @ np.asarray(self.normal, dtype=float) - self.offset


@dataclass(frozen=True)
class DistanceResult:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class SdfObject:
    """A shape with a world pose (4x4, world <- object) and a role."""

    shape: Superellipsoid | PointCloud | HalfSpace
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    role: str = OBSTACLE
    name: str = ""
    margin: float | None = None

    def __post_init__(self):
        if self.role not in (TARGET, OBSTACLE, ENVIRONMENT):
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def clearance(self) -> float:
        return DEFAULT_MARGINS[self.role] if self.margin is None else self.margin

    def with_pose(self, pose) -> "SdfObject":
        return replace(self, pose=np.asarray(pose, dtype=float))

    def evaluate(self, x, cutoff: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized distance values (N,) and world gradients (N, 3).

        With ``cutoff`` a shape may report ``inf`` (zero gradient) for points
        whose distance exceeds it; values below the cutoff are unchanged.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        R = self.pose[:3, :3]
        local = (x - self.pose[:3, 3]) @ R
        val, g = self.shape.local_eval(local, cutoff)
        return val, g @ R.T

    def values(self, x) -> np.ndarray:
        """Distance values only; skips the gradient work where a shape allows it."""
        local = (x - self.pose[:3, 3]) @ self.pose[:3, :3]
        fn = getattr(self.shape, "local_values", None)
        return fn(local) if fn is not None else self.shape.local_eval(local)[0]


def sdf_eval(obj: SdfObject, x) -> DistanceResult:
    val, g = obj.evaluate(np.asarray(x, dtype=float).reshape(1, 3))
    return DistanceResult(float(val[0]), g[0])


# ---------------------------------------------------------------------------
# Robot distance stacks


@dataclass(frozen=True)
class CollisionPairSet:
    """Sphere-sphere self pairs and sphere-environment pairs making up Gamma."""

    sphere_pairs: np.ndarray  # (k1, 2) sphere indices
    env_pairs: np.ndarray  # (k2, 2) [sphere index, environment object index]

    @property
    def k(self) -> int:
        return len(self.sphere_pairs) + len(self.env_pairs)


def build_collision_pairs(model: RobotModel, self_pairs: Sequence[tuple[int, int]], environment: Sequence[SdfObject]) -> CollisionPairSet:
    """Validate self pairs and pair every movable sphere with each environment object."""
    sp = np.asarray(list(self_pairs), dtype=int).reshape(-1, 2)
    par = model._sphere_parent
    same = par[sp[:, 0]] == par[sp[:, 1]] if len(sp) else np.zeros(0, bool)
    if np.any(same):
        raise ValueError("self-collision pairs must not join spheres on the same link")
    movable = [i for i, s in enumerate(model.collision_spheres) if s.parent >= 0]
    env = [(i, e) for e in range(len(environment)) for i in movable]
    return CollisionPairSet(sp, np.asarray(env, dtype=int).reshape(-1, 2))


@dataclass
class DistanceStack:
    """Distance rows (value, gradient wrt q) with per-row bookkeeping."""

    values: np.ndarray
    jacobian: np.ndarray
    spheres: np.ndarray  # sphere index per row
    others: np.ndarray  # other sphere index or object index per row (-1 when unused)
    degenerate: bool = False

    @classmethod
    def empty(cls, n: int):
        z = np.zeros(0, dtype=int)
        return cls(np.zeros(0), np.zeros((0, n)), z, z)

    def __len__(self):
        return len(self.values)


def _sphere_object_rows(model, kin, Js, sphere_idx, objects, obj_idx, cutoff):
    centers = kin.sphere_centers[sphere_idx]
    radii = model.sphere_radii[sphere_idx]
    vals, rows, sph, oth = [], [], [], []
    for oi in np.unique(obj_idx):
        sel = obj_idx == oi
        s = sphere_idx[sel]
        bound = float(cutoff + radii[sel].max()) if np.isfinite(cutoff) else None
        v, g = objects[oi].evaluate(centers[sel], bound)
        v = v - radii[sel]
        keep = v <= cutoff
        if not keep.any():
            continue
        s, v, g = s[keep], v[keep], g[keep]
        vals.append(v)
        rows.append(np.einsum("ki,kij->kj", g, Js[s]))
        sph.append(s)
        oth.append(np.full(len(s), oi))
    return vals, rows, sph, oth


def gamma(model: RobotModel, kin: KinematicsResult, pairs: CollisionPairSet, environment: Sequence[SdfObject], cutoff: float = np.inf, Js=None) -> DistanceStack:
    """Self and environment distances and their joint-space gradients.

    Sphere pairs give ``|c_a - c_b| - r_a - r_b``; environment pairs give
    ``sdf(c) - r``. Rows above ``cutoff`` are dropped.
    """
    n = model.n
    if Js is None:
        Js = sphere_jacobians(model, kin)
    vals, rows, sph, oth = [], [], [], []
    degenerate = False
    if len(pairs.sphere_pairs):
        a, b = pairs.sphere_pairs[:, 0], pairs.sphere_pairs[:, 1]
        diff = kin.sphere_centers[a] - kin.sphere_centers[b]
        dist = np.linalg.norm(diff, axis=1)
        v = dist - model.sphere_radii[a] - model.sphere_radii[b]
        keep = v <= cutoff
        if keep.any():
            a, b, diff, dist, v = a[keep], b[keep], diff[keep], dist[keep], v[keep]
            coincident = dist < 1e-12
            if coincident.any():
                degenerate = True
                log.warning("coincident sphere centers in self-collision pairs")
            nrm = diff / np.where(coincident, 1.0, dist)[:, None]
            nrm[coincident] = 0.0
            vals.append(v)
            rows.append(np.einsum("ki,kij->kj", nrm, Js[a] - Js[b]))
            sph.append(a)
            oth.append(b)
    if len(pairs.env_pairs):
        v, r, s, o = _sphere_object_rows(
            model, kin, Js, pairs.env_pairs[:, 0], list(environment), pairs.env_pairs[:, 1], cutoff
        )
        vals += v
        rows += r
        sph += s
        oth += o
    if not vals:
        st = DistanceStack.empty(n)
        st.degenerate = degenerate
        return st
    return DistanceStack(np.concatenate(vals), np.vstack(rows), np.concatenate(sph), np.concatenate(oth), degenerate)


def object_distance_stack(model: RobotModel, kin: KinematicsResult, objects: Sequence[SdfObject], sphere_indices=None, cutoff: float = np.inf, Js=None) -> DistanceStack:
    """Gripper-point to object distances ``sdf(c) - r`` stacked over points x objects."""
    n = model.n
    objects = list(objects)
    if sphere_indices is None:
        sphere_indices = model.hand_sphere_indices
    sphere_indices = np.asarray(sphere_indices, dtype=int)
    if not objects or not len(sphere_indices):
        return DistanceStack.empty(n)
    if Js is None:
        Js = sphere_jacobians(model, kin)
    s = np.tile(sphere_indices, len(objects))
    o = np.repeat(np.arange(len(objects)), len(sphere_indices))
    vals, rows, sph, oth = _sphere_object_rows(model, kin, Js, s, objects, o, cutoff)
    if not vals:
        return DistanceStack.empty(n)
    return DistanceStack(np.concatenate(vals), np.vstack(rows), np.concatenate(sph), np.concatenate(oth))


# ---------------------------------------------------------------------------
# Point cloud files


def load_point_cloud(path) -> np.ndarray:
    """CSV (x,y,z per row) or little-endian float32 triplets (``.bin``/``.f32``)."""
    path = Path(path)
    if path.suffix.lower() in (".bin", ".f32", ".raw"):
        data = np.fromfile(path, dtype="<f4")
        if data.size % 3:
            raise ValueError(f"{path}: binary cloud size is not a multiple of 3")
        return data.reshape(-1, 3).astype(float)
    pts = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if pts.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns")
    return pts


def save_point_cloud(points, path) -> None:
    path = Path(path)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if path.suffix.lower() in (".bin", ".f32", ".raw"):
        pts.astype("<f4").tofile(path)
    else:
        np.savetxt(path, pts, delimiter=",", fmt="%.9g")


def clearance_values(model: RobotModel, kin: KinematicsResult, pairs: CollisionPairSet,
                     environment: Sequence[SdfObject], objects: Sequence[SdfObject], sphere_indices=None):
    """Unpruned minimum distances without Jacobians: (min Gamma, min per object)."""
    c, r = kin.sphere_centers, model.sphere_radii
    g = np.inf
    if len(pairs.sphere_pairs):
        a, b = pairs.sphere_pairs[:, 0], pairs.sphere_pairs[:, 1]
        g = float(np.min(np.linalg.norm(c[a] - c[b], axis=1) - r[a] - r[b]))
    for e, env in enumerate(environment):
        s = pairs.env_pairs[pairs.env_pairs[:, 1] == e, 0]
        if len(s):
            g = min(g, float(np.min(env.values(c[s]) - r[s])))
    if sphere_indices is None:
        sphere_indices = model.hand_sphere_indices
    s = np.asarray(sphere_indices, dtype=int)
    per_obj = []
    cs, rs = c[s], r[s]
    for obj in objects:
        per_obj.append(float(np.min(obj.values(cs) - rs)) if len(s) else np.inf)
    return g, per_obj
