"""Dense convex QP solver with equality and inequality constraints.

    minimize    0.5 x' H x + g' x
    subject to  A_eq x = b_eq
                lower <= A_in x <= upper

Operator-splitting (ADMM) iterations with Ruiz equilibration, adaptive
step size, warm starting, and an active-set polish step that solves the
KKT system of the detected active constraints.  Infeasible problems are
reported through a certificate, not an exception, so a control loop can
fall back gracefully.

Every solve certifies its own output: the returned solution carries the
unscaled KKT residuals computed by :func:`kkt_residuals`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        d = self.g.shape[0]
        if self.H.shape != (d, d):
            raise ValueError("H/g dimension mismatch")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise ValueError("H must be symmetric (within 1e-10)")
        if self.A_eq is None or self.A_eq.size == 0:
            self.A_eq = np.zeros((0, d))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
            if self.A_eq.shape[0] != self.b_eq.shape[0]:
                raise ValueError("A_eq/b_eq dimension mismatch")
        if self.A_in is None or self.A_in.size == 0:
            self.A_in = np.zeros((0, d))
            self.lower = np.zeros(0)
            self.upper = np.zeros(0)
        else:
            self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, d)
            self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
            self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
            if not (self.A_in.shape[0] == self.lower.shape[0] == self.upper.shape[0]):
                raise ValueError("A_in/lower/upper dimension mismatch")
            if np.any(self.lower > self.upper):
                raise ValueError("lower > upper")

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpSettings:
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    max_iterations: int = 4000
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    sigma: float = 1e-6
    alpha: float = 1.6
    check_interval: int = 25
    adaptive_rho: bool = True
    regularization: float = 1e-9      # added to H's diagonal (semidefinite guard)
    polish: bool = True
    eps_infeasible: float = 1e-9


@dataclass
class QpSolution:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    status: str                        # optimal | primal-infeasible | max-iterations
    primal_residual: float
    dual_residual: float
    complementarity: float
    iterations: int
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def kkt_residuals(problem: QpProblem, x: np.ndarray,
                  duals_eq: np.ndarray, duals_in: np.ndarray,
                  H: np.ndarray | None = None) -> tuple[float, float, float]:
    """(primal, dual, complementarity) infinity-norm residuals at a candidate.

    ``H`` overrides the Hessian (the solver certifies itself against the
    regularized Hessian it solves with).
    """
    x = np.asarray(x, dtype=float)
    duals_eq = np.asarray(duals_eq, dtype=float)
    duals_in = np.asarray(duals_in, dtype=float)

    primal = 0.0
    if problem.A_eq.shape[0]:
        primal = float(np.max(np.abs(problem.A_eq @ x - problem.b_eq)))
    comp = 0.0
    if problem.A_in.shape[0]:
        s = problem.A_in @ x
        primal = max(primal,
                     float(np.max(np.maximum(problem.lower - s, 0.0), initial=0.0)),
                     float(np.max(np.maximum(s - problem.upper, 0.0), initial=0.0)))
        y_up = np.maximum(duals_in, 0.0)
        y_lo = np.minimum(duals_in, 0.0)
        slack_up = np.where(np.isfinite(problem.upper), problem.upper - s, np.inf)
        slack_lo = np.where(np.isfinite(problem.lower), s - problem.lower, np.inf)
        comp_terms = np.abs(y_up) * np.where(np.isfinite(slack_up), slack_up, 0.0) \
            + np.abs(y_lo) * np.where(np.isfinite(slack_lo), slack_lo, 0.0)
        comp = float(np.max(comp_terms, initial=0.0))

    grad = (problem.H if H is None else H) @ x + problem.g
    if problem.A_eq.shape[0]:
        grad = grad + problem.A_eq.T @ duals_eq
    if problem.A_in.shape[0]:
        grad = grad + problem.A_in.T @ duals_in
    dual = float(np.max(np.abs(grad), initial=0.0))
    return primal, dual, comp


class QpSolver:
    """Operator-splitting solver with per-instance warm-start memory.

    One instance per control loop; instances hold only their own
    workspace and can move freely between threads.
    """

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        self._warm_x: np.ndarray | None = None
        self._warm_y: np.ndarray | None = None

    def reset(self) -> None:
        self._warm_x = None
        self._warm_y = None

    def solve(self, problem: QpProblem, warm_start: bool = True) -> QpSolution:
        s = self.settings
        d = problem.dim
        m_eq = problem.A_eq.shape[0]
        m_in = problem.A_in.shape[0]
        m = m_eq + m_in

        H = problem.H + s.regularization * np.eye(d)
        g = problem.g
        A = np.vstack([problem.A_eq, problem.A_in]) if m else np.zeros((0, d))
        l = np.concatenate([problem.b_eq, problem.lower])
        u = np.concatenate([problem.b_eq, problem.upper])

        if m == 0:
            x = np.linalg.solve(H, -g)
            pri, dua, comp = kkt_residuals(problem, x, np.zeros(0), np.zeros(0))
            status = "optimal" if max(pri, dua) <= max(s.eps_primal, s.eps_dual) else "max-iterations"
            return QpSolution(x, np.zeros(0), np.zeros(0), status, pri, dua, comp, 0)

        # Ruiz equilibration on [[H, A'], [A, 0]] plus cost scaling
        D = np.ones(d)
        E = np.ones(m)
        Hs, gs, As = H.copy(), g.copy(), A.copy()
        for _ in range(10):
            cn = np.maximum(np.max(np.abs(Hs), axis=0, initial=0.0),
                            np.max(np.abs(As), axis=0, initial=0.0))
            cn[cn == 0.0] = 1.0
            dd = 1.0 / np.sqrt(cn)
            rn = np.max(np.abs(As), axis=1, initial=0.0) if m else np.zeros(0)
            rn[rn == 0.0] = 1.0
            de = 1.0 / np.sqrt(rn)
            Hs = dd[:, None] * Hs * dd[None, :]
            gs = dd * gs
            As = de[:, None] * As * dd[None, :]
            D *= dd
            E *= de
        cost_norm = max(np.mean(np.max(np.abs(Hs), axis=0, initial=0.0)),
                        np.max(np.abs(gs), initial=0.0))
        c = 1.0 / max(cost_norm, 1e-6)
        Hs *= c
        gs *= c
        ls = E * l
        us = E * u

        rho_vec = np.full(m, s.rho)
        rho_vec[:m_eq] *= s.rho_eq_scale

        # warm start (scaled)
        if warm_start and self._warm_x is not None and self._warm_x.shape[0] == d \
                and self._warm_y is not None and self._warm_y.shape[0] == m:
            x = self._warm_x / D
            y = self._warm_y * c / E
        elif problem.warm_start is not None:
            x = np.asarray(problem.warm_start, dtype=float) / D
            y = np.zeros(m)
        else:
            x = np.zeros(d)
            y = np.zeros(m)
        z = np.clip(As @ x, ls, us)

        lu = self._factor(Hs, As, rho_vec, s.sigma)
        status = "max-iterations"
        iters = s.max_iterations
        for it in range(1, s.max_iterations + 1):
            rhs = np.concatenate([s.sigma * x - gs, z - y / rho_vec])
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            x_t = sol[:d]
            nu = sol[d:]
            z_t = z + (nu - y) / rho_vec
            x_prev = x
            z_prev = z
            y_prev = y
            x = s.alpha * x_t + (1.0 - s.alpha) * x_prev
            z_aff = s.alpha * z_t + (1.0 - s.alpha) * z_prev
            z = np.clip(z_aff + y / rho_vec, ls, us)
            y = y + rho_vec * (z_aff - z)

            if it % s.check_interval == 0 or it == s.max_iterations:
                pri, dua = self._unscaled_residuals(problem, H, x * D, y * E / c, m_eq)
                if pri <= s.eps_primal and dua <= s.eps_dual:
                    status = "optimal"
                    iters = it
                    break
                if self._primal_infeasible(problem, (y - y_prev) * E / c, m_eq, s):
                    status = "primal-infeasible"
                    iters = it
                    break
                if s.adaptive_rho:
                    new_rho = self._adapt_rho(Hs, gs, As, x, y, z, rho_vec, s, m_eq)
                    if new_rho is not None:
                        rho_vec = new_rho
                        lu = self._factor(Hs, As, rho_vec, s.sigma)

        x_out = x * D
        y_out = y * E / c

        y_eq = y_out[:m_eq]
        y_in = y_out[m_eq:]
        polished = False
        if status != "primal-infeasible" and self.settings.polish:
            pol = self._polish(problem, x_out, y_in, H)
            if pol is not None:
                x_out, y_eq, y_in = pol
                polished = True

        # certify against the problem the solver actually solves (H plus its
        # documented diagonal regularization)
        pri, dua, comp = kkt_residuals(problem, x_out, y_eq, y_in, H=H)
        if status != "primal-infeasible":
            if max(pri, dua, comp) <= max(s.eps_primal, s.eps_dual):
                status = "optimal"
            else:
                status = "max-iterations"
        self._warm_x = x_out.copy()
        self._warm_y = np.concatenate([y_eq, y_in])
        return QpSolution(x_out, y_eq, y_in, status, pri, dua, comp, iters, polished)

    # -- internals ---------------------------------------------------------

    @staticmethod
    def _factor(Hs, As, rho_vec, sigma):
        d = Hs.shape[0]
        m = As.shape[0]
        K = np.zeros((d + m, d + m))
        K[:d, :d] = Hs + sigma * np.eye(d)
        K[:d, d:] = As.T
        K[d:, :d] = As
        K[d:, d:] = -np.diag(1.0 / rho_vec)
        return scipy.linalg.lu_factor(K, check_finite=False)

    @staticmethod
    def _unscaled_residuals(problem, Hreg, x, y, m_eq):
        pri, dua, _ = kkt_residuals(problem, x, y[:m_eq], y[m_eq:], H=Hreg)
        return pri, dua

    @staticmethod
    def _primal_infeasible(problem, dy, m_eq, s):
        norm = np.max(np.abs(dy), initial=0.0)
        if norm < 1e-14:
            return False
        dy = dy / norm
        A = np.vstack([problem.A_eq, problem.A_in])
        if np.max(np.abs(A.T @ dy), initial=0.0) > s.eps_infeasible * 1e3:
            return False
        l = np.concatenate([problem.b_eq, problem.lower])
        u = np.concatenate([problem.b_eq, problem.upper])
        dy_pos = np.maximum(dy, 0.0)
        dy_neg = np.minimum(dy, 0.0)
        # infinite bounds require a vanishing multiplier on that side
        if np.any(dy_pos[~np.isfinite(u)] > 1e-9) or np.any(dy_neg[~np.isfinite(l)] < -1e-9):
            return False
        support = float(u[np.isfinite(u)] @ dy_pos[np.isfinite(u)]
                        + l[np.isfinite(l)] @ dy_neg[np.isfinite(l)])
        return support < -1e-9

    @staticmethod
    def _adapt_rho(Hs, gs, As, x, y, z, rho_vec, s, m_eq):
        r_pri = np.max(np.abs(As @ x - z), initial=0.0)
        denom_p = max(np.max(np.abs(As @ x), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-10)
        r_dua = np.max(np.abs(Hs @ x + gs + As.T @ y), initial=0.0)
        denom_d = max(np.max(np.abs(Hs @ x), initial=0.0), np.max(np.abs(As.T @ y), initial=0.0),
                      np.max(np.abs(gs), initial=0.0), 1e-10)
        ratio = np.sqrt((r_pri / denom_p) / max(r_dua / denom_d, 1e-12))
        if 0.2 < ratio < 5.0:
            return None
        new_rho = np.clip(rho_vec * ratio, 1e-6, 1e6)
        new_rho[:m_eq] = np.clip(new_rho[:m_eq], 1e-3, 1e9)
        return new_rho

    @staticmethod
    def _polish(problem, x, y_in, Hreg=None, max_updates=60):
        """Active-set KKT polish seeded from the ADMM iterate.

        Solves the equality-constrained KKT system for the guessed active
        set and repairs the guess one constraint at a time (drop a
        wrong-signed multiplier, add the worst violated row).  Uses the
        same diagonal Hessian regularization as the splitting iterations,
        so rank-deficient objectives keep a unique polished optimum.
        Returns a verified (x, y_eq, y_in) triple or None.
        """
        d = problem.dim
        m_eq = problem.A_eq.shape[0]
        m_in = problem.A_in.shape[0]
        lower, upper = problem.lower, problem.upper
        fin_lo = np.isfinite(lower) if m_in else np.zeros(0, dtype=bool)
        fin_up = np.isfinite(upper) if m_in else np.zeros(0, dtype=bool)

        assign = np.zeros(m_in, dtype=int)      # 0 inactive, -1 lower, +1 upper
        if m_in:
            sarr = problem.A_in @ x
            scale = 1.0 + np.abs(sarr)
            tol_act = 1e-6
            assign[fin_up & ((upper - sarr < tol_act * scale) | (y_in > 1e-9))] = 1
            assign[fin_lo & ((sarr - lower < tol_act * scale) | (y_in < -1e-9))] = -1

        best = None
        best_err = np.inf
        for _ in range(max_updates):
            rows = np.nonzero(assign)[0]
            A_act = np.vstack([problem.A_eq, problem.A_in[rows]])
            b_act = np.concatenate([
                problem.b_eq,
                np.where(assign[rows] < 0, lower[rows], upper[rows]),
            ])
            ma = A_act.shape[0]
            # Hessian regularization stays in the refined system; the extra
            # factorization regularization does not.
            reg = 1e-12
            K = np.zeros((d + ma, d + ma))
            K[:d, :d] = problem.H if Hreg is None else Hreg
            K[:d, d:] = A_act.T
            K[d:, :d] = A_act
            Kr = K.copy()
            Kr[:d, :d] += reg * np.eye(d)
            Kr[d:, d:] -= reg * np.eye(ma)
            rhs = np.concatenate([-problem.g, b_act])
            try:
                lu = scipy.linalg.lu_factor(Kr, check_finite=False)
                sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                for _ in range(3):
                    sol = sol + scipy.linalg.lu_solve(lu, rhs - K @ sol, check_finite=False)
            except (scipy.linalg.LinAlgError, ValueError):
                return best
            x_p = sol[:d]
            y_eq_p = sol[d:d + m_eq]
            y_in_p = np.zeros(m_in)
            y_in_p[rows] = sol[d + m_eq:]

            pri, dua, comp = kkt_residuals(problem, x_p, y_eq_p, y_in_p, H=Hreg)
            # track the best dual-sign-consistent candidate
            sign_err = 0.0
            if rows.size:
                lam = y_in_p[rows]
                sign_err = float(np.max(np.where(assign[rows] < 0,
                                                 np.maximum(lam, 0.0),
                                                 np.maximum(-lam, 0.0)), initial=0.0))
            err = max(pri, dua, comp, sign_err)
            if err < best_err:
                best_err = err
                best = (x_p, y_eq_p, y_in_p.copy())
            if err <= 1e-9:
                return x_p, y_eq_p, y_in_p

            # repair the working set: first fix the worst wrong-signed
            # multiplier, otherwise add the most violated constraint
            if rows.size and sign_err > 1e-9:
                lam = y_in_p[rows]
                bad = np.where(assign[rows] < 0, np.maximum(lam, 0.0), np.maximum(-lam, 0.0))
                assign[rows[int(np.argmax(bad))]] = 0
                continue
            if m_in:
                s_p = problem.A_in @ x_p
                v_lo = np.where(fin_lo & (assign == 0), lower - s_p, -np.inf)
                v_up = np.where(fin_up & (assign == 0), s_p - upper, -np.inf)
                i_lo = int(np.argmax(v_lo)) if m_in else 0
                i_up = int(np.argmax(v_up)) if m_in else 0
                if max(v_lo[i_lo], v_up[i_up], -1.0) > 1e-9:
                    if v_lo[i_lo] >= v_up[i_up]:
                        assign[i_lo] = -1
                    else:
                        assign[i_up] = 1
                    continue
            return best
        return best


def solve(problem: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """One-shot solve with a fresh workspace."""
    return QpSolver(settings).solve(problem, warm_start=False)


def dump_problem(problem: QpProblem, path: str) -> None:
    """Plain-text dump (matrix-market style blocks) for offline debugging."""
    def block(fh, name, mat):
        mat = np.atleast_2d(mat)
        fh.write(f"%%MatrixMarket matrix array real general\n% {name}\n")
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for val in mat.T.reshape(-1):
            fh.write(f"{val!r}\n")

    with open(path, "w") as fh:
        fh.write("% wbclab qp dump v1\n")
        block(fh, "H", problem.H)
        block(fh, "g", problem.g.reshape(-1, 1))
        block(fh, "A_eq", problem.A_eq)
        block(fh, "b_eq", problem.b_eq.reshape(-1, 1))
        block(fh, "A_in", problem.A_in)
        block(fh, "lower", problem.lower.reshape(-1, 1))
        block(fh, "upper", problem.upper.reshape(-1, 1))
