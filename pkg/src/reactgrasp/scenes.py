"""Procedural object models, grasp candidates and scenario files.

Household objects are represented as surface point clouds sampled from
parametric surfaces (about 1500 points each); the box is a superellipsoid.
Each object frame has its origin at the center of the object's footprint on
the table, z up. Candidate grasps are two-fingertip sets in the object frame:
for open containers one fingertip sits inside the wall and one outside, a
little below the rim, so the pads pinch the wall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ENVIRONMENT, OBSTACLE, TARGET, HalfSpace, PointCloud, SdfObject, Superellipsoid, load_point_cloud
from .kinematics import ConfigurationError, make_transform, rpy_to_matrix

POINTS = 1500
GRASP_WIDTH = 0.078  # fingertip spread of every candidate: the gripper's nominal opening (m)
GRASP_OFFSET = 0.5 * GRASP_WIDTH  # fingertip center to a thin wall (m)
GRASP_DEPTH = 0.015  # below the rim (m)
N_ANGLES = 8


def _fib_sphere_band(n, z_lo, z_hi):
    """n points uniformly over the band z in [z_lo, z_hi] of the unit sphere."""
    i = np.arange(n) + 0.5
    z = z_lo + (z_hi - z_lo) * i / n
    th = np.pi * (1.0 + 5.0**0.5) * i
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


def _cylinder(n, radius, z0, z1):
    i = np.arange(n) + 0.5
    th = np.pi * (1.0 + 5.0**0.5) * i
    z = z0 + (z1 - z0) * i / n
    return np.stack([radius * np.cos(th), radius * np.sin(th), z], axis=1)


def _disk(n, radius, z):
    i = np.arange(n) + 0.5
    r = radius * np.sqrt(i / n)
    th = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack([r * np.cos(th), r * np.sin(th), np.full(n, z)], axis=1)


def _cap(n, Rs, zc, z_lo, z_hi):
    """Spherical shell of radius Rs centred at (0, 0, zc), clipped to z in [z_lo, z_hi]."""
    u = _fib_sphere_band(n, (z_lo - zc) / Rs, (z_hi - zc) / Rs)
    return u * Rs + np.array([0.0, 0.0, zc])


@dataclass(frozen=True)
class Bowl:
    """Spherical bowl resting on its bottom point."""

    Rs: float = 0.08
    height: float = 0.065

    def cloud(self, n=POINTS):
        return _cap(n, self.Rs, self.Rs, 0.0, self.height)

    def rim(self):
        return np.sqrt(self.Rs**2 - (self.height - self.Rs) ** 2), self.height

    def wall(self, theta, z):
        """Wall point and outward normal at height z along azimuth theta."""
        u = np.array([np.cos(theta), np.sin(theta), 0.0])
        r = np.sqrt(self.Rs**2 - (z - self.Rs) ** 2)
        p = r * u + np.array([0.0, 0.0, z])
        nrm = p - np.array([0.0, 0.0, self.Rs])
        return p, nrm / np.linalg.norm(nrm)


@dataclass(frozen=True)
class Dish:
    """Deep plate: flat floor and a short wall flaring outward with height."""

    r_floor: float = 0.10
    r_rim: float = 0.11
    height: float = 0.04
    depth: float = 0.01  # grasp depth below the rim

    def cloud(self, n=POINTS):
        floor_a = np.pi * self.r_floor**2
        slant = np.hypot(self.r_rim - self.r_floor, self.height)
        wall_a = np.pi * (self.r_floor + self.r_rim) * slant
        wall_n = int(n * wall_a / (wall_a + floor_a))
        i = np.arange(wall_n) + 0.5
        # uniform in area: the radius grows linearly with the slant coordinate
        s = (np.sqrt(self.r_floor**2 + i / wall_n * (self.r_rim**2 - self.r_floor**2)) - self.r_floor) / (
            self.r_rim - self.r_floor)
        th = np.pi * (1.0 + 5.0**0.5) * i
        r = self.r_floor + s * (self.r_rim - self.r_floor)
        wall = np.stack([r * np.cos(th), r * np.sin(th), s * self.height], axis=1)
        return np.vstack([wall, _disk(n - wall_n, self.r_floor, 0.0)])

    def rim(self):
        return self.r_rim, self.height

    def wall(self, theta, z):
        u = np.array([np.cos(theta), np.sin(theta), 0.0])
        slope = (self.r_rim - self.r_floor) / self.height
        p = (self.r_floor + slope * z) * u + np.array([0.0, 0.0, z])
        nrm = u - slope * np.array([0.0, 0.0, 1.0])
        return p, nrm / np.linalg.norm(nrm)


@dataclass(frozen=True)
class Mug:
    radius: float = 0.04
    height: float = 0.10
    handle: float = 0.03  # handle loop radius, on the +x side

    def cloud(self, n=POINTS):
        wall_n = int(n * 0.75)
        base_n = int(n * 0.13)
        h_n = n - wall_n - base_n
        pts = [_cylinder(wall_n, self.radius, 0.0, self.height), _disk(base_n, self.radius, 0.0)]
        # handle: a half torus (tube radius 0.006) in the xz plane
        i = np.arange(h_n) + 0.5
        a = -0.5 * np.pi + np.pi * i / h_n
        b = 2 * np.pi * ((i * 0.618034) % 1.0)
        zc = 0.5 * self.height
        ring = np.stack([self.radius + self.handle * np.cos(a), np.zeros(h_n), zc + self.handle * np.sin(a)], axis=1)
        tube = 0.006
        off = np.stack([tube * np.cos(b) * np.cos(a), tube * np.sin(b), tube * np.cos(b) * np.sin(a)], axis=1)
        pts.append(ring + off)
        return np.vstack(pts)

    def rim(self):
        return self.radius, self.height

    def wall(self, theta, z):
        u = np.array([np.cos(theta), np.sin(theta), 0.0])
        return self.radius * u + np.array([0.0, 0.0, z]), u


@dataclass(frozen=True)
class WineGlass:
    cup_radius: float = 0.05
    cup_center: float = 0.15
    cup_bottom: float = 0.10
    rim_height: float = 0.18
    stem_radius: float = 0.005
    foot_radius: float = 0.035

    def cloud(self, n=POINTS):
        cup_n = int(n * 0.75)
        stem_n = int(n * 0.1)
        foot_n = n - cup_n - stem_n
        return np.vstack([
            _cap(cup_n, self.cup_radius, self.cup_center, self.cup_bottom, self.rim_height),
            _cylinder(stem_n, self.stem_radius, 0.005, self.cup_bottom),
            _disk(foot_n, self.foot_radius, 0.002),
        ])

    def rim(self):
        return np.sqrt(self.cup_radius**2 - (self.rim_height - self.cup_center) ** 2), self.rim_height

    def wall(self, theta, z):
        u = np.array([np.cos(theta), np.sin(theta), 0.0])
        r = np.sqrt(self.cup_radius**2 - (z - self.cup_center) ** 2)
        p = r * u + np.array([0.0, 0.0, z])
        nrm = p - np.array([0.0, 0.0, self.cup_center])
        return p, nrm / np.linalg.norm(nrm)


GENERATORS = {"bowl": Bowl, "dish": Dish, "mug": Mug, "wine_glass": WineGlass}

BOX = dict(a=0.015, b=0.015, c=0.045, e1=0.2, e2=0.2)


def rim_candidates(obj, angles=N_ANGLES, offset=GRASP_OFFSET, depth=GRASP_DEPTH, skip=()):
    """Inside/outside wall pinches at evenly spaced azimuths, both finger orders."""
    _, z_rim = obj.rim()
    z = z_rim - depth
    out = []
    for k in range(angles):
        if k in skip:
            continue
        th = 2 * np.pi * k / angles
        p, nrm = obj.wall(th, z)
        inner, outer = p - offset * nrm, p + offset * nrm
        out.append(np.stack([inner, outer]))
        out.append(np.stack([outer, inner]))
    return out


def box_candidates(a, b, c, width=GRASP_WIDTH, **_):
    """Pinches across the x and y faces at mid height, both finger orders."""
    z = 0.0  # the superellipsoid frame sits at the box center
    out = []
    for u in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
        p1 = 0.5 * width * u + [0, 0, z]
        p2 = -0.5 * width * u + [0, 0, z]
        out += [np.stack([p1, p2]), np.stack([p2, p1])]
    return out


def object_candidates(kind: str):
    if kind == "box":
        return box_candidates(**BOX)
    gen = GENERATORS[kind]()
    # skip the mug's handle side
    return rim_candidates(gen, depth=getattr(gen, "depth", GRASP_DEPTH), skip=(0,) if kind == "mug" else ())


def make_shape(spec: dict, base_dir: Path | None = None):
    kind = spec.get("type")
    if kind == "superellipsoid":
        return Superellipsoid(*(float(spec[k]) for k in ("a", "b", "c", "e1", "e2")))
    if kind == "point_cloud":
        if "path" in spec:
            p = Path(spec["path"])
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return PointCloud(load_point_cloud(p))
        gen = spec.get("generator")
        if gen not in GENERATORS:
            raise ConfigurationError(f"unknown point cloud generator {gen!r}")
        return PointCloud(GENERATORS[gen]().cloud(int(spec.get("points", POINTS))))
    if kind == "half_space":
        return HalfSpace(np.asarray(spec["normal"], dtype=float), float(spec.get("offset", 0.0)))
    if kind == "box":
        return Superellipsoid(**BOX)
    raise ConfigurationError(f"unknown shape type {kind!r}")


def pose_from(spec) -> np.ndarray:
    if spec is None:
        return np.eye(4)
    if isinstance(spec, dict):
        return make_transform(rpy_to_matrix(spec.get("rpy", (0, 0, 0))), spec.get("xyz", (0, 0, 0)))
    T = np.asarray(spec, dtype=float)
    if T.shape != (4, 4):
        raise ConfigurationError("pose must be {xyz, rpy} or a 4x4 matrix")
    return T


@dataclass
class Motion:
    """Scripted obstacle motion: ``center + amplitude * sin(2 pi t / period + phase)``."""

    amplitude: np.ndarray
    period: float
    phase: float | str = 0.0

    def offset(self, t: float, phase: float) -> np.ndarray:
        return self.amplitude * np.sin(2 * np.pi * t / self.period + phase)

    def velocity(self, t: float, phase: float) -> np.ndarray:
        return self.amplitude * (2 * np.pi / self.period) * np.cos(2 * np.pi * t / self.period + phase)


@dataclass
class SceneObject:
    obj: SdfObject
    kind: str = ""
    motion: Motion | None = None
    spec: dict = field(default_factory=dict)

    @property
    def name(self):
        return self.obj.name


def load_scenario_dict(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def build_objects(data: dict, base_dir: Path | None = None) -> tuple[list[SceneObject], list[SdfObject]]:
    objects, environment = [], []
    names = set()
    for spec in data.get("objects", []):
        role = spec.get("role", OBSTACLE)
        name = spec.get("name") or f"object{len(objects)}"
        if name in names:
            raise ConfigurationError(f"duplicate object name {name!r}")
        names.add(name)
        shape = make_shape(spec["shape"], base_dir)
        obj = SdfObject(shape, pose_from(spec.get("pose")), role, name, spec.get("margin"))
        motion = None
        if "motion" in spec:
            m = spec["motion"]
            motion = Motion(np.asarray(m["amplitude"], dtype=float), float(m["period"]), m.get("phase", 0.0))
            if motion.period <= 0:
                raise ConfigurationError("motion period must be positive")
        kind = spec["shape"].get("generator", spec["shape"].get("type", ""))
        objects.append(SceneObject(obj, kind, motion, spec))
    for spec in data.get("environment", []):
        shape = make_shape(spec["shape"], base_dir)
        environment.append(SdfObject(shape, pose_from(spec.get("pose")), ENVIRONMENT, spec.get("name", "env"),
                                     spec.get("margin")))
    n_target = sum(o.obj.role == TARGET for o in objects)
    if n_target != 1:
        raise ConfigurationError(f"scene needs exactly one target object, found {n_target}")
    return objects, environment


def scenario_candidates(data: dict, target: SceneObject) -> list[np.ndarray]:
    spec = data.get("candidates", {"generator": target.kind})
    if isinstance(spec, dict):
        kind = spec.get("generator", target.kind)
        if kind not in GENERATORS and kind not in ("box", "superellipsoid"):
            raise ConfigurationError(f"no candidate generator for {kind!r}")
        cands = object_candidates("box" if kind == "superellipsoid" else kind)
    else:
        cands = [np.asarray(c, dtype=float) for c in spec]
    if not cands:
        raise ConfigurationError("empty candidate set")
    return cands


def table(offset=0.0) -> SdfObject:
    return SdfObject(HalfSpace(np.array([0.0, 0.0, 1.0]), offset), role=ENVIRONMENT, name="table")
