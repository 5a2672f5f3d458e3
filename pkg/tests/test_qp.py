import numpy as np
import pytest

from wbclab.qp import QpProblem, QpSettings, QpSolver, dump_problem, kkt_residuals, solve

from qp_oracle import enumerate_solve


def test_unconstrained_scalar():
    # minimize 0.5 x^2 - x  ->  x = 1
    sol = solve(QpProblem(H=np.array([[1.0]]), g=np.array([-1.0])))
    assert sol.ok
    assert abs(sol.x[0] - 1.0) < 1e-8


def test_equality_symmetric_split():
    # minimize 0.5 ||x||^2 s.t. x1 + x2 = 1  ->  (0.5, 0.5)
    sol = solve(QpProblem(H=np.eye(2), g=np.zeros(2),
                          A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0])))
    assert sol.ok
    assert np.max(np.abs(sol.x - 0.5)) < 1e-8


def test_box_constrained():
    # minimize 0.5 (x-3)^2 with x <= 1  ->  x = 1, active upper bound
    sol = solve(QpProblem(H=np.array([[1.0]]), g=np.array([-3.0]),
                          A_in=np.array([[1.0]]), lower=np.array([-np.inf]),
                          upper=np.array([1.0])))
    assert sol.ok
    assert abs(sol.x[0] - 1.0) < 1e-8
    assert sol.duals_in[0] > 1.0  # pushing at the upper bound


def _random_problem(rng, d, m_eq, m_in, two_sided):
    A = rng.normal(size=(d, d))
    H = A @ A.T + (0.1 + rng.uniform()) * np.eye(d)
    g = rng.normal(size=d) * 2.0
    A_eq = rng.normal(size=(m_eq, d)) if m_eq else None
    b_eq = rng.normal(size=m_eq) if m_eq else None
    A_in = rng.normal(size=(m_in, d)) if m_in else None
    if m_in:
        mid = A_in @ rng.normal(size=d) * 0.3
        if two_sided:
            lower = mid - rng.uniform(0.05, 1.5, size=m_in)
            upper = mid + rng.uniform(0.05, 1.5, size=m_in)
        else:
            lower = np.full(m_in, -np.inf)
            upper = mid + rng.uniform(-0.5, 1.0, size=m_in)
    else:
        lower = upper = None
    return QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, lower=lower, upper=upper)


def test_random_suite_against_enumeration_oracle():
    # acceptance criterion 6: 1000 random strictly convex problems,
    # d <= 8, m_in <= 6, must match active-set enumeration within 1e-6
    rng = np.random.default_rng(2024)
    solver = QpSolver()
    n_checked = 0
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        m_eq = int(rng.integers(0, min(3, d)))
        m_in = int(rng.integers(0, 7))
        two_sided = bool(rng.uniform() < 0.3) and m_in <= 4
        prob = _random_problem(rng, d, m_eq, m_in, two_sided)
        sol = solver.solve(prob, warm_start=False)
        x_ref, obj_ref = enumerate_solve(prob.H, prob.g, prob.A_eq, prob.b_eq,
                                         prob.A_in, prob.lower, prob.upper)
        if x_ref is None:
            assert not sol.ok or np.linalg.norm(sol.x) < 1e12
            continue
        assert sol.ok, f"solver failed on a feasible problem ({sol.status})"
        assert np.linalg.norm(sol.x - x_ref) < 1e-6
        assert prob.objective(sol.x) <= obj_ref + 1e-6
        n_checked += 1
    assert n_checked > 800


def test_kkt_residuals_exact_optimum():
    # minimize 0.5 x'Hx + g'x with analytic optimum: H x* = -g
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([1.0, -2.0])
    x_star = np.linalg.solve(H, -g)
    pri, dua, comp = kkt_residuals(QpProblem(H=H, g=g), x_star, np.zeros(0), np.zeros(0))
    assert max(pri, dua, comp) <= 1e-12


def test_kkt_residuals_grow_linearly_in_perturbation():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([1.0, -2.0])
    prob = QpProblem(H=H, g=g)
    x_star = np.linalg.solve(H, -g)
    direction = np.array([1.0, -0.3])
    res = []
    eps_values = [1e-6, 1e-5, 1e-4, 1e-3]
    for eps in eps_values:
        _, dua, _ = kkt_residuals(prob, x_star + eps * direction, np.zeros(0), np.zeros(0))
        res.append(dua)
    ratios = np.diff(np.log(res)) / np.diff(np.log(eps_values))
    assert np.allclose(ratios, 1.0, atol=0.05)


def test_kkt_residuals_zero_problem():
    prob = QpProblem(H=np.eye(3), g=np.zeros(3))
    pri, dua, comp = kkt_residuals(prob, np.zeros(3), np.zeros(0), np.zeros(0))
    assert (pri, dua, comp) == (0.0, 0.0, 0.0)


def test_solution_certified_on_every_solve():
    rng = np.random.default_rng(5)
    solver = QpSolver()
    for _ in range(50):
        prob = _random_problem(rng, 5, 1, 4, False)
        sol = solver.solve(prob, warm_start=False)
        if sol.ok:
            # reported certificates and an independent recomputation
            assert max(sol.primal_residual, sol.dual_residual, sol.complementarity) <= 1e-6
            pri, dua, comp = kkt_residuals(prob, sol.x, sol.duals_eq, sol.duals_in)
            assert pri <= 1e-6 and dua <= 1e-6 and comp <= 1e-6


def test_infeasible_problem_reported_not_raised():
    # x >= 1 and x <= 0 cannot hold
    prob = QpProblem(H=np.array([[1.0]]), g=np.zeros(1),
                     A_in=np.array([[1.0], [1.0]]),
                     lower=np.array([1.0, -np.inf]),
                     upper=np.array([np.inf, 0.0]))
    sol = solve(prob)
    assert sol.status == "primal-infeasible"


def test_determinism():
    rng = np.random.default_rng(11)
    prob = _random_problem(rng, 6, 2, 4, True)
    a = solve(prob)
    b = solve(prob)
    assert np.array_equal(a.x, b.x)
    assert a.iterations == b.iterations
    assert a.status == b.status


def test_warm_start_not_slower_on_slowly_varying_sequence():
    # synthetic control-loop sequence: slowly rotating objective
    rng = np.random.default_rng(3)
    base = _random_problem(rng, 8, 2, 5, False)
    warm = QpSolver()
    n_better = 0
    n_total = 0
    cold_solver = QpSolver()
    warm.solve(base, warm_start=False)
    for k in range(60):
        gk = base.g + 0.01 * k * np.sin(0.1 * k) * np.ones(8)
        prob = QpProblem(H=base.H, g=gk, A_eq=base.A_eq, b_eq=base.b_eq,
                         A_in=base.A_in, lower=base.lower, upper=base.upper)
        sw = warm.solve(prob, warm_start=True)
        sc = cold_solver.solve(prob, warm_start=False)
        assert sw.ok and sc.ok
        n_total += 1
        if sw.iterations <= sc.iterations:
            n_better += 1
    assert n_better / n_total >= 0.9


def test_rank_deficient_hessian_handled():
    # zero block in H (like torques/forces in the whole-body QP)
    H = np.zeros((3, 3))
    H[0, 0] = 1.0
    g = np.array([-1.0, 0.0, 0.0])
    A_eq = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, -1.0]])
    b_eq = np.array([2.0, 0.0])
    sol = solve(QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq))
    assert sol.ok
    assert abs(sol.x[0] + sol.x[1] - 2.0) < 1e-7


def test_problem_validation():
    with pytest.raises(ValueError, match="symmetric"):
        QpProblem(H=np.array([[1.0, 0.5], [0.0, 1.0]]), g=np.zeros(2))
    with pytest.raises(ValueError, match="lower"):
        QpProblem(H=np.eye(1), g=np.zeros(1), A_in=np.eye(1),
                  lower=np.array([1.0]), upper=np.array([0.0]))


def test_dump_problem_roundtrippable_text(tmp_path):
    prob = QpProblem(H=np.eye(2), g=np.array([1.0, -1.0]),
                     A_in=np.eye(2), lower=-np.ones(2), upper=np.ones(2))
    path = tmp_path / "prob.txt"
    dump_problem(prob, str(path))
    text = path.read_text()
    assert "MatrixMarket" in text
    assert "% H" in text and "% upper" in text
