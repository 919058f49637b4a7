import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from reactgrasp.qpsolver import MAX_ITERS, PRIMAL_INFEASIBLE, SOLVED, QpProblem, QpSolver, solve


def random_qp(rng, n, r, two_sided=0.3):
    M = rng.normal(size=(n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    c = rng.normal(size=n)
    A = rng.normal(size=(r, n))
    z0 = rng.normal(size=n)  # feasible by construction
    Az = A @ z0
    lower = Az - rng.uniform(0.0, 1.0, r)
    upper = np.where(rng.random(r) < two_sided, Az + rng.uniform(0.0, 1.0, r), np.inf)
    return QpProblem(P, c, A, lower, upper)


def enumerate_active_sets(prob: QpProblem) -> float:
    """Best objective over all primal-feasible stationary points of active sets."""
    P, c, A, lo, up = prob.P, prob.c, prob.A, prob.lower, prob.upper
    n, r = prob.n, prob.r
    choices = [(None, "lo") + (("up",) if np.isfinite(up[j]) else ()) for j in range(r)]
    best = np.inf
    for combo in itertools.product(*choices):
        act = [j for j in range(r) if combo[j] is not None]
        if len(act) > n:
            continue
        Aa = A[act]
        ba = np.array([lo[j] if combo[j] == "lo" else up[j] for j in act])
        K = np.block([[P, Aa.T], [Aa, np.zeros((len(act), len(act)))]])
        try:
            sol = np.linalg.solve(K, np.r_[-c, ba])
        except np.linalg.LinAlgError:
            continue
        z = sol[:n]
        Az = A @ z
        if np.all(Az >= lo - 1e-9) and np.all(Az <= up + 1e-9):
            best = min(best, prob.objective(z))
    return best


def test_one_dimensional_kkt():
    prob = QpProblem(np.array([[2.0]]), np.zeros(1), np.array([[1.0]]), np.array([1.0]), np.array([np.inf]))
    sol = solve(prob, polish=True)
    assert sol.status == SOLVED
    assert sol.z[0] == pytest.approx(1.0, abs=1e-6)
    # stationarity P z + c + A^T y = 0 fixes the sign convention
    assert sol.y[0] == pytest.approx(-2.0, abs=1e-5)


def test_unconstrained_is_linear_solve(rng):
    M = rng.normal(size=(5, 5))
    P = M @ M.T + np.eye(5)
    c = rng.normal(size=5)
    sol = solve(QpProblem(P, c, None, np.zeros(0), np.zeros(0)))
    assert np.allclose(sol.z, -np.linalg.solve(P, c), atol=1e-12)


def test_matches_active_set_enumeration(rng):
    worst = 0.0
    solver = QpSolver(polish=True)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        r = int(rng.integers(1, 9))
        prob = random_qp(rng, n, r)
        sol = solver.solve(prob)
        assert sol.status == SOLVED
        worst = max(worst, abs(prob.objective(sol.z) - enumerate_active_sets(prob)))
    assert worst <= 1e-6


def test_larger_instances_against_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    solver = QpSolver(polish=True)
    for _ in range(20):
        n, r = int(rng.integers(10, 31)), int(rng.integers(10, 61))
        prob = random_qp(rng, n, r)
        sol = solver.solve(prob)
        assert sol.status == SOLVED
        z = cp.Variable(n)
        fin = np.isfinite(prob.upper)
        cons = [prob.A @ z >= prob.lower]
        if fin.any():
            cons.append(prob.A[fin] @ z <= prob.upper[fin])
        ref = cp.Problem(cp.Minimize(0.5 * cp.quad_form(z, cp.psd_wrap(prob.P)) + prob.c @ z), cons)
        ref.solve(solver=cp.CLARABEL)
        assert abs(prob.objective(sol.z) - ref.value) <= 1e-6 * max(1.0, abs(ref.value))


def test_solved_status_meets_tolerances(rng):
    for _ in range(20):
        prob = random_qp(rng, 8, 12)
        sol = QpSolver(polish=False).solve(prob)
        assert sol.status == SOLVED
        # absolute plus relative tolerance, relative to the magnitudes in each residual
        eps_p = 1e-6 + 1e-6 * np.abs(prob.A @ sol.z).max()
        eps_d = 1e-6 + 1e-6 * max(np.abs(prob.P @ sol.z).max(), np.abs(prob.A.T @ sol.y).max(), np.abs(prob.c).max())
        assert sol.primal_residual <= eps_p * (1 + 1e-9)
        assert sol.dual_residual <= eps_d * (1 + 1e-9)


def test_complementary_slackness(rng):
    for _ in range(30):
        prob = random_qp(rng, 6, 10)
        sol = solve(prob, polish=True)
        Az = prob.A @ sol.z
        slack_lo = Az - prob.lower
        slack_up = np.where(np.isfinite(prob.upper), prob.upper - Az, np.inf)
        # y < 0 pushes against the lower bound, y > 0 against the upper
        comp = np.zeros(prob.r)
        comp[sol.y < 0] = -sol.y[sol.y < 0] * slack_lo[sol.y < 0]
        comp[sol.y > 0] = sol.y[sol.y > 0] * slack_up[sol.y > 0]
        assert np.all(comp <= 1e-5 * max(1.0, np.abs(sol.y).max()))


def test_warm_start_resolve_is_fast(rng):
    solver = QpSolver()
    for _ in range(10):
        prob = random_qp(rng, 10, 20)
        first = solver.solve(prob)
        again = solver.solve(prob, first)
        assert again.iterations <= 5
        assert np.allclose(again.z, first.z, atol=2e-6)


def test_permutation_and_scaling_invariance(rng):
    tol = 1e-6
    for _ in range(20):
        prob = random_qp(rng, 7, 14)
        base = solve(prob, tol_abs=tol, tol_rel=tol)
        perm = rng.permutation(prob.r)
        p2 = QpProblem(prob.P, prob.c, prob.A[perm], prob.lower[perm], prob.upper[perm])
        s = 3.7
        p3 = QpProblem(s * prob.P, s * prob.c, prob.A, prob.lower, prob.upper)
        for other in (solve(p2, tol_abs=tol, tol_rel=tol), solve(p3, tol_abs=tol, tol_rel=tol)):
            assert np.abs(other.z - base.z).max() <= 2 * tol * max(1.0, np.abs(base.z).max()) * 10


def test_equality_rows(rng):
    P = np.eye(3)
    c = np.zeros(3)
    A = np.array([[1.0, 1.0, 1.0]])
    sol = solve(QpProblem(P, c, A, np.array([3.0]), np.array([3.0])), polish=True)
    assert np.allclose(sol.z, [1, 1, 1], atol=1e-6)


def test_infeasible_is_detected():
    A = np.array([[1.0], [1.0]])
    prob = QpProblem(np.eye(1), np.zeros(1), A, np.array([1.0, -np.inf]), np.array([np.inf, 0.0]))
    assert solve(prob).status == PRIMAL_INFEASIBLE


def test_max_iters_returns_iterate(rng):
    prob = random_qp(rng, 10, 20)
    sol = solve(prob, max_iters=5)
    assert sol.status in (MAX_ITERS, SOLVED)
    assert np.all(np.isfinite(sol.z))


def test_sparse_inputs_match_dense(rng):
    prob = random_qp(rng, 6, 9)
    dense = solve(prob, polish=True)
    sparse = solve(QpProblem(sp.csr_matrix(prob.P), prob.c, sp.csr_matrix(prob.A), prob.lower, prob.upper), polish=True)
    assert np.allclose(dense.z, sparse.z, atol=1e-8)


def test_dump_load_round_trip(rng, tmp_path):
    prob = random_qp(rng, 4, 6)
    prob.dump(tmp_path / "qp.json")
    back = QpProblem.load(tmp_path / "qp.json")
    for name in ("P", "c", "A", "lower", "upper"):
        assert np.array_equal(getattr(back, name), getattr(prob, name))


def test_invalid_problems_are_rejected():
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), None, np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(2), np.ones((1, 2)), np.array([1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(2), np.ones((1, 2)), np.zeros(2), np.zeros(2))
