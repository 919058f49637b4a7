"""Joint-space QP that tracks the task-space velocity fields.

Each tick solves

    min  sum_i |xdot_i - J_i qdot|^2 + alpha sum_i |omega_i - JR_i qdot|^2
         + beta |qdot_gr - S qdot|^2 + lam |qdot|^2

subject to four row families, all linearized over a short horizon ``H``:
self/environment clearance, gripper-to-object clearance, joint position
limits and joint velocity limits. Rows whose current distance exceeds the
pruning distance are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import VelocityTargets
from .geometry import TARGET, CollisionPairSet, DistanceStack, SdfObject, gamma, object_distance_stack
from .kinematics import KinematicsResult, RobotModel, fingertip_jacobians, forward_kinematics, sphere_jacobians
from .qpsolver import MAX_ITERS, PRIMAL_INFEASIBLE, QpProblem, QpSolution, QpSolver

log = logging.getLogger(__name__)

FAMILIES = ("gamma", "object", "joint", "velocity")
ABORTED = "aborted"


@dataclass
class TrackerParams:
    horizon: float = 0.15  # s
    eps_gamma: float = 0.005  # m
    eps_target: float = 0.01  # m
    eps_obstacle: float = 0.05  # m
    reg: float = 1e-4
    prune_distance: float = 0.15  # m
    tol: float = 1e-6
    max_iters: int = 4000
    residual_tol: float = 1e-5
    backoff: float = 0.5
    backoff_steps: int = 5

    def object_margin(self, obj: SdfObject) -> float:
        if obj.margin is not None:
            return obj.margin
        return self.eps_target if obj.role == TARGET else self.eps_obstacle


@dataclass
class TrackerQp:
    problem: QpProblem
    family: np.ndarray  # family index per row
    gamma: DistanceStack
    objects: DistanceStack


@dataclass
class TrackerOutput:
    qdot: np.ndarray
    status: str
    residual: float  # worst linearized-row violation at qdot
    iterations: int = 0
    rows: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    solution: QpSolution | None = None


def _cost_terms(jacs, S, targets: VelocityTargets, reg):
    """Hessian/linear parts of the tracking cost (without the 1/2 factor)."""
    n = S.shape[1]
    H = reg * np.eye(n)
    g = np.zeros(n)
    for i, (Jx, JR) in enumerate(jacs):
        H += Jx.T @ Jx + targets.alpha * JR.T @ JR
        g += Jx.T @ targets.xdot_des[i] + targets.alpha * JR.T @ targets.omega_des[i]
    H += targets.beta * S.T @ S
    g += targets.beta * S.T @ targets.qdot_gr_des
    return 2.0 * H, -2.0 * g


def cost_breakdown(qdot, jacs, S, targets: VelocityTargets, reg) -> dict:
    pos = sum(float(np.sum((targets.xdot_des[i] - Jx @ qdot) ** 2)) for i, (Jx, _) in enumerate(jacs))
    ori = targets.alpha * sum(float(np.sum((targets.omega_des[i] - JR @ qdot) ** 2)) for i, (_, JR) in enumerate(jacs))
    grip = targets.beta * float(np.sum((targets.qdot_gr_des - S @ qdot) ** 2))
    return {"position": pos, "orientation": ori, "gripper": grip, "regularization": reg * float(qdot @ qdot)}


def build_qp(model: RobotModel, q, kin: KinematicsResult, jacs, targets: VelocityTargets,
             gamma_stack: DistanceStack, obj_stack: DistanceStack, obj_margins: Sequence[float],
             params: TrackerParams) -> TrackerQp:
    n = model.n
    Hz = params.horizon
    S = model.selection_matrix
    P, c = _cost_terms(jacs, S, targets, params.reg)

    obj_eps = np.asarray(obj_margins, dtype=float)[obj_stack.others] if len(obj_stack) else np.zeros(0)
    eye = np.eye(n)
    # joint-limit rows are relaxed so they never contradict the velocity box
    # when a disturbance has pushed q outside its limits
    j_lo = np.minimum(model.q_min - q, Hz * model.qd_max)
    j_up = np.maximum(model.q_max - q, Hz * model.qd_min)
    A = np.vstack([Hz * gamma_stack.jacobian, Hz * obj_stack.jacobian, Hz * eye, eye])
    lower = np.r_[params.eps_gamma - gamma_stack.values, obj_eps - obj_stack.values, j_lo, model.qd_min]
    upper = np.r_[np.full(len(gamma_stack) + len(obj_stack), np.inf), j_up, model.qd_max]
    family = np.repeat(np.arange(4), [len(gamma_stack), len(obj_stack), n, n])
    return TrackerQp(QpProblem(P, c, A, lower, upper), family, gamma_stack, obj_stack)


def _finite_problem(qp: QpProblem) -> bool:
    A = qp.A.toarray() if hasattr(qp.A, "toarray") else np.asarray(qp.A)
    return bool(np.all(np.isfinite(qp.P)) and np.all(np.isfinite(qp.c)) and np.all(np.isfinite(A))
                and not np.any(np.isnan(qp.lower)) and not np.any(np.isnan(qp.upper)))


def row_violation(problem: QpProblem, qdot) -> float:
    Az = problem.A @ qdot
    return float(max(np.max(problem.lower - Az, initial=0.0), np.max(Az - problem.upper, initial=0.0)))


class Tracker:
    """Stateful tracker: keeps the previous QP solution for warm starts."""

    def __init__(self, model: RobotModel, pairs: CollisionPairSet, environment: Sequence[SdfObject],
                 params: TrackerParams | None = None, solver: QpSolver | None = None):
        self.model = model
        self.pairs = pairs
        self.environment = list(environment)
        self.params = params or TrackerParams()
        self.solver = solver or QpSolver(tol_abs=self.params.tol, tol_rel=self.params.tol,
                                         max_iters=self.params.max_iters, polish=True)
        self._warm: QpSolution | None = None
        self.last_qp: TrackerQp | None = None
        self._last_qdot = np.zeros(model.n)

    def reset(self):
        self._warm = None
        self._last_qdot = np.zeros(self.model.n)

    def assemble(self, q, targets: VelocityTargets, objects: Sequence[SdfObject], kin=None, jacs=None) -> TrackerQp:
        model, prm = self.model, self.params
        q = np.asarray(q, dtype=float)
        if kin is None:
            kin = forward_kinematics(model, q)
        if jacs is None:
            jacs = fingertip_jacobians(model, q, kin)
        Js = sphere_jacobians(model, kin)
        gs = gamma(model, kin, self.pairs, self.environment, cutoff=prm.prune_distance, Js=Js)
        os_ = object_distance_stack(model, kin, objects, cutoff=prm.prune_distance, Js=Js)
        margins = [prm.object_margin(o) for o in objects]
        return build_qp(model, q, kin, jacs, targets, gs, os_, margins, prm)

    def step(self, q, targets: VelocityTargets, objects: Sequence[SdfObject], kin=None, jacs=None) -> TrackerOutput:
        model, prm = self.model, self.params
        q = np.asarray(q, dtype=float)
        if kin is None:
            kin = forward_kinematics(model, q)
        if jacs is None:
            jacs = fingertip_jacobians(model, q, kin)
        tq = self.assemble(q, targets, objects, kin, jacs)
        self.last_qp = tq
        qp = tq.problem
        flags = []
        if tq.gamma.degenerate:
            flags.append("degenerate_gamma")
        if not _finite_problem(qp):
            # a NaN gradient or target: keep the previous command for this tick
            log.error("non-finite tracker QP; reusing the previous command")
            qdot = self._last_qdot.copy()
            rows = {f: int(np.sum(tq.family == k)) for k, f in enumerate(FAMILIES)}
            return TrackerOutput(qdot, ABORTED, float("nan"), 0, rows, {}, {}, flags + ["nonfinite_problem"])
        sol = self.solver.solve(qp, self._warm)
        qdot = sol.z.copy()
        status = sol.status
        if not np.all(np.isfinite(qdot)):
            flags.append("nonfinite_solution")
            qdot = np.zeros(model.n)
            status = PRIMAL_INFEASIBLE
        if status == PRIMAL_INFEASIBLE:
            flags.append("infeasible")
            log.warning("tracker QP infeasible; commanding zero velocity")
            qdot = np.zeros(model.n)
            self._warm = None
        else:
            self._warm = sol
            res = row_violation(qp, qdot)
            if status == MAX_ITERS or res > prm.residual_tol:
                flags.append("max_iters" if status == MAX_ITERS else "residual")
                for _ in range(prm.backoff_steps):
                    if row_violation(qp, qdot) <= prm.residual_tol:
                        break
                    qdot = prm.backoff * qdot
                if row_violation(qp, qdot) > prm.residual_tol:
                    flags.append("backoff_failed")
        res = row_violation(qp, qdot)
        self._last_qdot = qdot.copy()
        Az = qp.A @ qdot
        tight = (np.abs(Az - qp.lower) <= 1e-7) | (np.abs(qp.upper - Az) <= 1e-7)
        rows = {f: int(np.sum(tq.family == k)) for k, f in enumerate(FAMILIES)}
        active = {f: np.nonzero(tight & (tq.family == k))[0].tolist() for k, f in enumerate(FAMILIES)}
        cost = cost_breakdown(qdot, jacs, model.selection_matrix, targets, prm.reg)
        return TrackerOutput(qdot, status, res, sol.iterations, rows, active, cost, flags, sol)


def track(model: RobotModel, q, targets: VelocityTargets, pairs: CollisionPairSet, environment, objects,
          params: TrackerParams | None = None) -> TrackerOutput:
    """One-shot tracking step without warm starting."""
    return Tracker(model, pairs, environment, params).step(q, targets, objects)
