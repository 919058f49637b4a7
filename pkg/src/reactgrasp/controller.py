"""One planning tick: target selection, fingertip paths, fields, joint QP."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import FieldParams, VelocityTargets, build_targets, select_target
from .geometry import ENVIRONMENT, CollisionPairSet, SdfObject
from .kinematics import RobotModel, forward_kinematics, fingertip_jacobians
from .pathopt import PathConstraint, PathOptimizer, PathProblem, PathSolution
from .qpsolver import QpSolver
from .tracker import Tracker, TrackerOutput, TrackerParams

PLANNERS = ("ours", "linear")


@dataclass
class PathParams:
    n_points: int = 100
    sqp_iters: int = 3
    trust_region: float = 0.05
    via_radius: float = 0.10
    via_samples: int = 256
    tol: float = 1e-4  # ADMM tolerance inside the control loop
    fallback_violation: float = 0.02
    lookahead: float = 0.02  # m of path used to read off the initial direction
    feas_tol: float = 5e-4  # m, merit feasibility tolerance for the looser in-loop QPs
    step_tol: float = 5e-4  # m, early SQP stop once the accepted step is this small


@dataclass
class ControllerParams:
    fields: FieldParams = field(default_factory=FieldParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    path: PathParams = field(default_factory=PathParams)


@dataclass
class TickResult:
    qdot: np.ndarray
    targets: VelocityTargets
    tracker: TrackerOutput
    paths: list[PathSolution | None]
    target_index: int
    timings: dict = field(default_factory=dict)


def fingertip_radii(model: RobotModel) -> np.ndarray:
    """Radius of the collision sphere centered on each fingertip (0 if none)."""
    q0 = np.clip(np.zeros(model.n), model.q_min, model.q_max)
    kin = forward_kinematics(model, q0)
    out = np.zeros(model.m)
    for i, x in enumerate(kin.positions):
        d = np.linalg.norm(kin.sphere_centers - x, axis=1) if len(kin.sphere_centers) else np.zeros(0)
        hit = np.nonzero(d < 1e-9)[0]
        if hit.size:
            out[i] = model.sphere_radii[hit].max()
    return out


class GraspController:
    """Holds per-fingertip path optimizers and the tracker between ticks."""

    def __init__(self, model: RobotModel, pairs: CollisionPairSet, environment: Sequence[SdfObject],
                 params: ControllerParams | None = None, planner: str = "ours"):
        if planner not in PLANNERS:
            raise ValueError(f"unknown planner {planner!r}")
        self.model = model
        self.params = params or ControllerParams()
        self.planner = planner
        self.environment = list(environment)
        self.tracker = Tracker(model, pairs, self.environment, self.params.tracker)
        pp = self.params.path
        self.optimizers = [
            PathOptimizer(QpSolver(tol_abs=pp.tol, tol_rel=pp.tol, max_iters=2000), pp.fallback_violation, pp.feas_tol)
            for _ in range(model.m)
        ]
        self.tip_radii = fingertip_radii(model)
        fp = self.params.fields
        if fp.q_gr_nominal is None:
            from .robots import nominal_gripper

            fp.q_gr_nominal = nominal_gripper(model) if model.name == "arm7_hand8" else None
        self._last_target = -1

    def reset(self):
        for o in self.optimizers:
            o.reset()
        self.tracker.reset()
        self._last_target = -1

    def path_constraints(self, i: int, objects: Sequence[SdfObject]) -> list[PathConstraint]:
        tp = self.params.tracker
        r = self.tip_radii[i]
        cons = [PathConstraint(o, tp.object_margin(o) + r) for o in objects]
        cons += [PathConstraint(e, (e.margin if e.margin is not None else tp.eps_gamma) + r)
                 for e in self.environment if e.role == ENVIRONMENT]
        return cons

    def tick(self, q, objects: Sequence[SdfObject], candidates: Sequence[np.ndarray]) -> TickResult:
        """``objects`` are target/obstacle snapshots; ``candidates`` are world-frame fingertip sets."""
        t0 = time.perf_counter()
        model, prm = self.model, self.params
        q = model.check_q(q)
        kin = forward_kinematics(model, q)
        jacs = fingertip_jacobians(model, q, kin)
        x = kin.positions
        R = [f.R for f in kin.fingertips]
        k = select_target(x, candidates, prm.fields.w)
        target = np.asarray(candidates[k], dtype=float).reshape(model.m, 3)
        if k != self._last_target:
            for o in self.optimizers:
                o.reset()
            self._last_target = k
        t1 = time.perf_counter()
        paths: list[PathSolution | None] = [None] * model.m
        directions = None
        if self.planner == "ours":
            pp = prm.path
            directions = []
            for i in range(model.m):
                prob = PathProblem(x[i], target[i], self.path_constraints(i, objects), pp.n_points, pp.sqp_iters,
                                   pp.trust_region, pp.via_radius, pp.via_samples, pp.lookahead, pp.step_tol)
                paths[i] = self.optimizers[i].plan(prob)
                directions.append(paths[i].initial_direction)
        t2 = time.perf_counter()
        q_gr = q[model.gripper_joint_indices]
        targets = build_targets(x, R, q_gr, k, target, prm.fields, directions)
        out = self.tracker.step(q, targets, objects, kin, jacs)
        t3 = time.perf_counter()
        timings = {"select": t1 - t0, "paths": t2 - t1, "track": t3 - t2, "total": t3 - t0}
        return TickResult(out.qdot, targets, out, paths, k, timings)

