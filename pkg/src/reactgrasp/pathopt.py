"""Shortest collision-free fingertip paths in 3D.

The path is discretized into ``n_points`` waypoints with pinned endpoints.
The objective is the sum of squared segment lengths and every interior
waypoint must keep a clearance ``d(w) >= margin`` from each constraint
object. A handful of SQP iterations, each a QP with linearized clearance
rows inside a box trust region, refine an initial guess. The initial guess
is a two-segment polyline through a single via point sampled on a sphere
around the goal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import SdfObject
from .qpsolver import PRIMAL_INFEASIBLE, QpProblem, QpSolution, QpSolver

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6


@dataclass(frozen=True)
class PathConstraint:
    obj: SdfObject
    margin: float

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("path margins must be positive")


@dataclass
class PathProblem:
    start: np.ndarray
    goal: np.ndarray
    constraints: Sequence[PathConstraint] = ()
    n_points: int = 100
    sqp_iters: int = 3
    trust_region: float = 0.05
    via_radius: float = 0.10
    via_samples: int = 256
    lookahead: float = 0.0  # arc length (m) used for the initial direction; 0 means the first segment
    step_tol: float = 0.0  # stop early once a feasible accepted step moves no waypoint more than this (m)

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(3)
        self.goal = np.asarray(self.goal, dtype=float).reshape(3)
        self.constraints = list(self.constraints)
        if self.n_points < 3:
            raise ValueError("need at least 3 waypoints")


@dataclass
class PathSolution:
    waypoints: np.ndarray
    initial_direction: np.ndarray
    max_violation: float
    converged: bool
    degenerate: bool = False
    iterations: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def length(self) -> float:
        return path_length(self.waypoints)


def path_length(W) -> float:
    return float(np.linalg.norm(np.diff(W, axis=0), axis=1).sum())


def path_energy(W) -> float:
    """Discretized integral of |dc/ds|^2 over s in [0, 1]; equals |goal - start|^2 on a line."""
    return float((len(W) - 1) * np.sum(np.diff(W, axis=0) ** 2))


def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    theta = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _evaluate(problem: PathProblem, pts: np.ndarray):
    # distances beyond margin + trust-region reach never produce a violation or
    # an active row, so the shapes may skip them
    reach = problem.trust_region * np.sqrt(3.0) + 1e-6
    return [con.obj.evaluate(pts, con.margin + reach) for con in problem.constraints]


def _violation_from(problem: PathProblem, evals, n) -> np.ndarray:
    v = np.zeros(n)
    for con, (d, _) in zip(problem.constraints, evals):
        np.maximum(v, con.margin - d, out=v)
    return v


def violations(problem: PathProblem, pts: np.ndarray) -> np.ndarray:
    """Per-point worst clearance shortfall ``max(0, margin - d)``."""
    return _violation_from(problem, _evaluate(problem, pts), len(pts))


def max_violation(problem: PathProblem, W) -> float:
    return float(violations(problem, W[1:-1]).max(initial=0.0))


def straight_line(start, goal, n) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    W = start + t * (goal - start)
    W[0], W[-1] = start, goal
    return W


def resample(pts: np.ndarray, n: int) -> np.ndarray:
    """Uniform arc-length resampling of a polyline to ``n`` points."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.r_[0.0, np.cumsum(seg)]
    if s[-1] <= 0:
        return np.repeat(pts[:1], n, axis=0)
    t = np.linspace(0.0, s[-1], n)
    W = np.stack([np.interp(t, s, pts[:, k]) for k in range(3)], axis=1)
    W[0], W[-1] = pts[0], pts[-1]
    return W


@dataclass
class ViaPointInit:
    waypoints: np.ndarray
    via_point: np.ndarray | None
    violation: float  # summed over the waypoints


def init_via_point(problem: PathProblem) -> ViaPointInit:
    """Seed polyline: the straight segment if it is clear, else the best two-segment path.

    Candidates are ``via_samples`` points on a sphere of radius ``via_radius``
    around the goal, scored by summed clearance violation (then length).
    """
    p = problem
    N = p.n_points
    line = straight_line(p.start, p.goal, N)
    if np.linalg.norm(p.goal - p.start) < 1e-12:
        return ViaPointInit(line, None, 0.0)
    line_v = float(violations(p, line).sum())
    if line_v == 0.0:
        return ViaPointInit(line, None, 0.0)

    vias = p.goal + p.via_radius * fibonacci_sphere(p.via_samples)
    L1 = np.linalg.norm(vias - p.start, axis=1)
    L2 = np.linalg.norm(p.goal - vias, axis=1)
    total = L1 + L2
    t = np.linspace(0.0, 1.0, N)[None, :] * total[:, None]  # (M, N)
    first = t <= L1[:, None]
    a = np.where(first, t / np.maximum(L1, 1e-300)[:, None], (t - L1[:, None]) / np.maximum(L2, 1e-300)[:, None])
    seg_start = np.where(first[..., None], p.start, vias[:, None, :])
    seg_end = np.where(first[..., None], vias[:, None, :], p.goal)
    pts = seg_start + a[..., None] * (seg_end - seg_start)
    pts[:, 0] = p.start
    pts[:, -1] = p.goal
    score = violations(p, pts.reshape(-1, 3)).reshape(len(vias), N).sum(axis=1)
    order = np.lexsort((total, score))
    best = int(order[0])
    if score[best] >= line_v:
        return ViaPointInit(line, None, line_v)
    return ViaPointInit(pts[best], vias[best], float(score[best]))


def _chain_qp_matrix(n_free: int) -> sp.csr_matrix:
    """Hessian of sum |w_{j+1} - w_j|^2 over the free waypoints (waypoint-major)."""
    T = sp.diags([np.full(n_free - 1, -1.0), np.full(n_free, 2.0), np.full(n_free - 1, -1.0)], [-1, 0, 1])
    return sp.csr_matrix(2.0 * sp.kron(T, sp.eye(3)))


def _better(new, old, feas_tol=FEAS_TOL) -> bool:
    """Lexicographic (violation, energy) merit with a feasibility tolerance."""
    (vn, en), (vo, eo) = new, old
    if vn <= feas_tol and vo <= feas_tol:
        return en <= eo
    if vn < vo - 1e-9:
        return True
    return vn <= vo + 1e-12 and en <= eo


class PathOptimizer:
    """SQP path optimizer for one fingertip; keeps its last solution for warm starts."""

    def __init__(self, solver: QpSolver | None = None, fallback_violation: float = 0.02, feas_tol: float = FEAS_TOL):
        self.solver = solver or QpSolver(tol_abs=1e-5, tol_rel=1e-5, max_iters=2000)
        self.fallback_violation = fallback_violation
        # violations below this count as feasible in the merit test; should
        # exceed the QP tolerance plus the clearance linearization error
        self.feas_tol = feas_tol
        self.previous: PathSolution | None = None
        self._hessians: dict[int, sp.csr_matrix] = {}
        self.last_seed = ""

    def reset(self):
        self.previous = None

    def _hessian(self, n_free):
        if n_free not in self._hessians:
            self._hessians[n_free] = _chain_qp_matrix(n_free)
        return self._hessians[n_free]

    def optimize(self, problem: PathProblem, init: np.ndarray, evals=None) -> PathSolution:
        """SQP from ``init``; ``evals`` may carry the constraint evaluations of its interior."""
        p = problem
        N = p.n_points
        W = np.array(init, dtype=float).reshape(N, 3)
        W[0], W[-1] = p.start, p.goal
        nf = N - 2
        if evals is None:
            evals = _evaluate(p, W[1:-1])  # reused for the merit and the next linearization
        cur = (float(_violation_from(p, evals, nf).max(initial=0.0)), path_energy(W))
        history = [cur]
        tr = p.trust_region
        converged = True
        iters = 0
        P = self._hessian(nf)
        c = np.zeros(3 * nf)
        c[:3] = -2.0 * p.start
        c[-3:] += -2.0 * p.goal
        for _ in range(p.sqp_iters):
            iters += 1
            interior = W[1:-1]
            rows_j, rows_g, rows_lo = [], [], []
            reach = tr * np.sqrt(3.0)
            for con, (d, g) in zip(p.constraints, evals):
                act = np.nonzero(d < con.margin + reach + 1e-9)[0]
                if act.size:
                    rows_j.append(act)
                    rows_g.append(g[act])
                    # d + g.(w - w_k) >= margin
                    rows_lo.append(con.margin - d[act] + np.einsum("ij,ij->i", g[act], interior[act]))
            if not p.constraints:
                # unconstrained: the exact minimizer is the straight line
                cand = straight_line(p.start, p.goal, N)
            else:
                j = np.concatenate(rows_j) if rows_j else np.zeros(0, dtype=int)
                g = np.vstack(rows_g) if rows_g else np.zeros((0, 3))
                k = len(j)
                # clearance rows, then the trust-region box as identity rows
                indptr = np.r_[np.arange(0, 3 * k + 1, 3), 3 * k + 1 + np.arange(3 * nf)]
                indices = np.r_[(3 * j[:, None] + np.arange(3)).ravel(), np.arange(3 * nf)]
                data = np.r_[g.ravel(), np.ones(3 * nf)]
                A = sp.csr_matrix((data, indices, indptr), shape=(k + 3 * nf, 3 * nf))
                x0 = interior.ravel()
                lo = np.r_[np.concatenate(rows_lo) if rows_lo else np.zeros(0), x0 - tr]
                up = np.r_[np.full(k, np.inf), x0 + tr]
                qp = QpProblem(P, c, A, lo, up)
                # primal warm start at the current iterate; duals start at zero
                # because the row set changes between iterations
                warm = QpSolution(x0, np.zeros(0), "warm", 0.0, 0.0, 0, self.solver.rho)
                sol = self.solver.solve(qp, warm)
                if sol.status == PRIMAL_INFEASIBLE or not np.all(np.isfinite(sol.z)):
                    converged = False
                    log.debug("path QP failed: %s", sol.status)
                    break
                cand = W.copy()
                cand[1:-1] = sol.z.reshape(nf, 3)
            cand[0], cand[-1] = p.start, p.goal
            cand_evals = _evaluate(p, cand[1:-1])
            new = (float(_violation_from(p, cand_evals, nf).max(initial=0.0)), path_energy(cand))
            step = float(np.abs(cand - W).max())
            if _better(new, cur, self.feas_tol):
                W, cur, evals = cand, new, cand_evals
                history.append(cur)
            else:
                tr *= 0.5
            # a feasible iterate whose QP step is this small is stationary up to solver accuracy
            if step <= p.step_tol and cur[0] <= self.feas_tol:
                break
            if not p.constraints:
                break
        direction, degenerate = initial_direction(W, p.lookahead)
        return PathSolution(W, direction, cur[0], converged and cur[0] <= max(self.feas_tol, 1e-3), degenerate, iters, history)

    def plan(self, problem: PathProblem) -> PathSolution:
        """Warm-started solve: shift the previous path, fall back to a via-point seed."""
        seed, evals = None, None
        if self.previous is not None and len(self.previous.waypoints) == problem.n_points:
            seed = shift_path(self.previous.waypoints, problem.start, problem.goal)
            evals = _evaluate(problem, seed[1:-1])
            if _violation_from(problem, evals, len(seed) - 2).max(initial=0.0) > self.fallback_violation:
                seed, evals = None, None
        self.last_seed = "warm" if seed is not None else "via"
        if seed is None:
            seed = init_via_point(problem).waypoints
        sol = self.optimize(problem, seed, evals)
        self.previous = sol
        return sol


def initial_direction(W: np.ndarray, lookahead: float = 0.0):
    """Unit direction from the start toward the first waypoint at arc length >= ``lookahead``.

    Returns ``(direction, degenerate)``; a zero-length path is degenerate.
    """
    seg = np.linalg.norm(np.diff(W, axis=0), axis=1)
    if lookahead > 0:
        s = np.cumsum(seg)
        j = int(np.searchsorted(s, lookahead)) + 1
        d = W[min(j, len(W) - 1)] - W[0]
    else:
        d = W[1] - W[0]
    nd = np.linalg.norm(d)
    if nd < 1e-12:
        return np.zeros(3), True
    return d / nd, False


def optimize_path(problem: PathProblem, init=None, solver: QpSolver | None = None) -> PathSolution:
    if init is None:
        init = init_via_point(problem).waypoints
    return PathOptimizer(solver).optimize(problem, init)


def shift_path(W: np.ndarray, start, goal) -> np.ndarray:
    """Re-anchor a previous path: drop the part already travelled, then blend in the new endpoints."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    n = len(W)
    k = int(np.argmin(np.linalg.norm(W[:-1] - start, axis=1)))
    pts = np.vstack([start, W[k + 1 :]])
    R = resample(pts, n)
    seg = np.linalg.norm(np.diff(R, axis=0), axis=1)
    s = np.r_[0.0, np.cumsum(seg)]
    s = s / s[-1] if s[-1] > 0 else np.linspace(0.0, 1.0, n)
    R = R + s[:, None] * (goal - R[-1])
    R[0], R[-1] = start, goal
    return R
