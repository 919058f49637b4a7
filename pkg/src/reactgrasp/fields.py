"""Task-space velocity fields handed to the joint-space tracker each tick.

* fingertip linear velocities follow the initial direction of an optimized
  collision-free path, with a speed that saturates far from the target and
  decays quadratically close to it;
* fingertip angular velocities descend an angle-based grasp stability
  score, weighted by a smooth switch ``alpha(g)``;
* gripper joints are pulled toward a loosely open posture, weighted by
  ``beta(h)`` which fades out near the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kinematics import ConfigurationError, skew, unskew

ROT_STEP = 1e-5  # rad, central-difference step along rotation generators


@dataclass
class FieldParams:
    v_const: float = 0.25  # m/s
    delta_x: float = 0.08  # m
    eta_g: float = 0.2  # rad
    T_g: float = 0.1  # rad
    eta_h: float = 0.05  # m
    T_h: float = 0.02  # m
    delta_gr: float = 0.3  # rad
    v_const_gr: float = 1.0  # rad/s
    w: float = 0.1  # m/rad, target-selection angle weight
    K: float | np.ndarray = 2.0  # 1/s, linear baseline gain (scalar means K * I)
    q_gr_nominal: np.ndarray | None = None

    def __post_init__(self):
        for name in ("v_const", "delta_x", "eta_g", "T_g", "eta_h", "T_h", "delta_gr", "v_const_gr"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.w < 0:
            raise ConfigurationError("w must be non-negative")
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 0:
            if K <= 0:
                raise ConfigurationError("K must be positive definite")
        else:
            if not np.allclose(K, K.T) or np.linalg.eigvalsh(K).min() <= 0:
                raise ConfigurationError("K must be symmetric positive definite")
        if self.q_gr_nominal is not None:
            self.q_gr_nominal = np.asarray(self.q_gr_nominal, dtype=float)


@dataclass
class VelocityTargets:
    xdot_des: np.ndarray  # (m, 3)
    omega_des: np.ndarray  # (m, 3)
    qdot_gr_des: np.ndarray  # (n_gr,)
    alpha: float
    beta: float
    target_index: int
    target: np.ndarray  # (m, 3)
    g: float = float("nan")
    h: float = float("nan")
    flags: list[str] = field(default_factory=list)


def angle_between(a, b) -> float:
    """Unsigned angle in [0, pi]; atan2 keeps precision near 0 and pi."""
    a0, a1, a2 = (float(v) for v in a)
    b0, b1, b2 = (float(v) for v in b)
    c0, c1, c2 = a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    return math.atan2(math.sqrt(c0 * c0 + c1 * c1 + c2 * c2), a0 * b0 + a1 * b1 + a2 * b2)


def target_metric(x: np.ndarray, cand: np.ndarray, w: float) -> float:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    cand = np.asarray(cand, dtype=float).reshape(-1, 3)
    val = float(np.linalg.norm(x - cand, axis=1).sum())
    if len(x) == 2:
        val += w * angle_between(x[1] - x[0], cand[1] - cand[0])
    return val


def select_target(x, candidates: Sequence, w: float) -> int:
    """Index of the candidate fingertip set closest to ``x``.

    For two fingertips the metric adds ``w`` times the angle between the
    current and candidate inter-fingertip axes; for other counts only the
    summed position distances are used. Ties go to the lowest index.
    """
    if len(candidates) == 0:
        raise ConfigurationError("empty target candidate set")
    scores = [target_metric(x, c, w) for c in candidates]
    return int(np.argmin(scores))


def speed_profile(e: float, v_const: float, delta: float) -> float:
    if e > delta:
        return v_const
    r = 1.0 - e / delta
    return v_const * (1.0 - r * r)


def fingertip_field(direction, x, x_star, params: FieldParams):
    """Desired fingertip velocity along a unit ``direction``.

    Returns ``(velocity, ok)``; ``ok`` is False when the direction is
    degenerate, in which case the velocity is zero.
    """
    x = np.asarray(x, dtype=float)
    e = float(np.linalg.norm(x - np.asarray(x_star, dtype=float)))
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd < 1e-12:
        return np.zeros(3), e < 1e-12
    return speed_profile(e, params.v_const, params.delta_x) * d / nd, True


def linear_baseline(x, x_star, K) -> np.ndarray:
    """Linear attractor ``K (x* - x)`` on stacked fingertip positions."""
    x = np.asarray(x, dtype=float).ravel()
    err = np.asarray(x_star, dtype=float).ravel() - x
    K = np.asarray(K, dtype=float)
    return K * err if K.ndim == 0 else K @ err


# ---------------------------------------------------------------------------
# Orientation stability


PAD_AXIS = np.array([1.0, 1.0, 0.0])  # contact-pad axis R^x + R^y in the fingertip frame


def _score(x1, R1, x2, R2) -> float:
    return 0.5 * (angle_between(x2 - x1, R1 @ PAD_AXIS) + angle_between(x1 - x2, R2 @ PAD_AXIS))


def _expso3(w) -> np.ndarray:
    th = np.linalg.norm(w)
    K = skew(w)
    if th < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + np.sin(th) / th * K + (1 - np.cos(th)) / th**2 * (K @ K)


@dataclass
class StabilityScore:
    g: float
    gradients: list[np.ndarray]  # dg/dR_i, each 3x3
    valid: bool = True


def stability_score(x1, R1, x2, R2, step: float = ROT_STEP) -> StabilityScore:
    """Mean angle between each finger's pad axis and the direction to the other finger.

    The 3x3 gradients are assembled from central differences along the three
    body-frame rotation generators: with directional derivatives ``d`` the
    gradient is ``R [d] / 2``, the tangent-space gradient under the Frobenius
    metric.
    """
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    R1, R2 = np.asarray(R1, float), np.asarray(R2, float)
    if np.linalg.norm(x2 - x1) < 1e-12:
        return StabilityScore(float("nan"), [np.zeros((3, 3)), np.zeros((3, 3))], False)
    g = _score(x1, R1, x2, R2)
    grads = []
    for i in range(2):
        d = np.zeros(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            Rp = (R1, R2)[i] @ _expso3(e)
            Rm = (R1, R2)[i] @ _expso3(-e)
            if i == 0:
                d[k] = (_score(x1, Rp, x2, R2) - _score(x1, Rm, x2, R2)) / (2 * step)
            else:
                d[k] = (_score(x1, R1, x2, Rp) - _score(x1, R1, x2, Rm)) / (2 * step)
        grads.append((R1, R2)[i] @ skew(d) / 2.0)
    return StabilityScore(g, grads, True)


def orientation_field(grad: np.ndarray, R: np.ndarray) -> np.ndarray:
    """World angular velocity ``-unskew(dg/dR R^T)`` after skew projection."""
    M = grad @ R.T
    return -unskew(0.5 * (M - M.T))


def _switch(v, eta, T) -> float:
    return 0.5 + 0.5 * np.tanh((v - eta) / T)


def weight_alpha(g: float, eta_g: float, T_g: float) -> float:
    return float(_switch(g, eta_g, T_g))


def weight_beta(h: float, eta_h: float, T_h: float) -> float:
    return float(_switch(h, eta_h, T_h))


def gripper_field(q_gr, q_gr_star, delta_gr: float, v_const_gr: float) -> np.ndarray:
    diff = np.asarray(q_gr_star, dtype=float) - np.asarray(q_gr, dtype=float)
    e = float(np.linalg.norm(diff))
    if e < 1e-12:
        return np.zeros_like(diff)
    return speed_profile(e, v_const_gr, delta_gr) * diff / e


# ---------------------------------------------------------------------------


def build_targets(x, R, q_gr, target_index, target, params: FieldParams, directions=None) -> VelocityTargets:
    """Assemble one tick of velocity targets.

    ``directions`` holds one path direction per fingertip (path-based
    fields); when None the linear baseline drives the fingertips instead.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    target = np.asarray(target, dtype=float).reshape(-1, 3)
    m = len(x)
    flags = []
    if directions is None:
        xdot = linear_baseline(x, target, params.K).reshape(m, 3)
    else:
        xdot = np.zeros((m, 3))
        for i in range(m):
            xdot[i], ok = fingertip_field(directions[i], x[i], target[i], params)
            if not ok:
                flags.append(f"degenerate_direction_{i}")
    omega = np.zeros((m, 3))
    alpha = 0.0
    g = float("nan")
    if m == 2:
        st = stability_score(x[0], R[0], x[1], R[1])
        if st.valid:
            g = st.g
            alpha = weight_alpha(g, params.eta_g, params.T_g)
            for i in range(2):
                omega[i] = orientation_field(st.gradients[i], R[i])
        else:
            flags.append("coincident_fingertips")
    h = float(np.linalg.norm(x - target))
    beta = weight_beta(h, params.eta_h, params.T_h)
    q_gr = np.asarray(q_gr, dtype=float)
    nominal = params.q_gr_nominal if params.q_gr_nominal is not None else q_gr
    qdot_gr = gripper_field(q_gr, nominal, params.delta_gr, params.v_const_gr)
    return VelocityTargets(xdot, omega, qdot_gr, alpha, beta, int(target_index), target, g, h, flags)
