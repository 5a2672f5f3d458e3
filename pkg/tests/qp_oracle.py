"""Active-set enumeration oracle for small strictly convex QPs.

Independent of the production solver: enumerates every assignment of
inequality rows to {inactive, at-lower, at-upper}, solves the resulting
equality-constrained KKT system, keeps KKT-consistent candidates, and
returns the feasible one with the lowest objective.
"""

from __future__ import annotations

import itertools

import numpy as np


def enumerate_solve(H, g, A_eq, b_eq, A_in, lower, upper, tol=1e-9):
    d = g.shape[0]
    m_in = A_in.shape[0]
    best_x = None
    best_obj = np.inf

    choices = []
    for i in range(m_in):
        opts = [0]
        if np.isfinite(lower[i]):
            opts.append(-1)
        if np.isfinite(upper[i]) and upper[i] != lower[i]:
            opts.append(+1)
        choices.append(opts)

    for assign in itertools.product(*choices):
        rows = [i for i, a in enumerate(assign) if a != 0]
        if len(rows) + A_eq.shape[0] > d:
            continue
        A_act = np.vstack([A_eq] + [A_in[i:i + 1] for i in rows]) if rows or A_eq.shape[0] \
            else np.zeros((0, d))
        b_act = np.concatenate(
            [b_eq] + [[lower[i] if assign[i] < 0 else upper[i]] for i in rows]) \
            if rows or A_eq.shape[0] else np.zeros(0)
        ma = A_act.shape[0]
        K = np.zeros((d + ma, d + ma))
        K[:d, :d] = H
        K[:d, d:] = A_act.T
        K[d:, :d] = A_act
        rhs = np.concatenate([-g, b_act])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        x = sol[:d]
        lam = sol[d + A_eq.shape[0]:]
        # dual feasibility: multiplier sign must match the active side
        ok = True
        for lam_i, i in zip(lam, rows):
            if assign[i] < 0 and lam_i > tol:
                ok = False
                break
            if assign[i] > 0 and lam_i < -tol:
                ok = False
                break
        if not ok:
            continue
        s = A_in @ x if m_in else np.zeros(0)
        if np.any(s < lower - 1e-8) or np.any(s > upper + 1e-8):
            continue
        obj = 0.5 * x @ H @ x + g @ x
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_x = x
    return best_x, best_obj
