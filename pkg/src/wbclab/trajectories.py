"""Reference trajectory generators: sinusoids and boundary polynomials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sinusoid(amplitude_pp: float, freq: float, t: float, offset: float = 0.0):
    """(pos, vel, acc) of offset + (A_pp/2) sin(2 pi f t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    a = 0.5 * amplitude_pp
    w = 2.0 * np.pi * freq
    s, c = np.sin(w * t), np.cos(w * t)
    return offset + a * s, a * w * c, -a * w * w * s


@dataclass
class PolynomialTrajectory:
    """Polynomial in t with explicit duration and boundary conditions.

    ``coeffs`` are ascending powers (7 entries for the sixth-order
    family); evaluation outside [0, duration] holds the boundary state
    with zero velocity/acceleration at the far end.
    """

    coeffs: np.ndarray
    duration: float
    boundary: tuple          # (x0, v0, a0, x1, v1, a1)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        x0, v0, a0, x1, v1, a1 = self.boundary
        p0, dp0, ddp0 = self._eval_raw(0.0)
        p1, dp1, ddp1 = self._eval_raw(self.duration)
        worst = max(abs(p0 - x0), abs(dp0 - v0), abs(ddp0 - a0),
                    abs(p1 - x1), abs(dp1 - v1), abs(ddp1 - a1))
        if worst > 1e-9:
            raise ValueError(f"boundary residual {worst:.2e} exceeds 1e-9")

    def _eval_raw(self, t: float):
        c = self.coeffs
        powers = t ** np.arange(len(c))
        pos = float(c @ powers)
        dc = c[1:] * np.arange(1, len(c))
        vel = float(dc @ powers[: len(c) - 1])
        ddc = dc[1:] * np.arange(1, len(c) - 1)
        acc = float(ddc @ powers[: len(c) - 2])
        return pos, vel, acc

    def evaluate(self, t: float):
        """(pos, vel, acc); clamped to the boundary states outside [0, T]."""
        if t <= 0.0:
            return self._eval_raw(0.0)
        if t >= self.duration:
            x1 = self.boundary[3]
            return x1, 0.0, 0.0
        return self._eval_raw(t)


def fit_sixth_order(x0: float, v0: float, a0: float,
                    x1: float, v1: float, a1: float, T: float,
                    kind: str = "min-jerk") -> PolynomialTrajectory:
    """Sixth-order polynomial meeting both (pos, vel, acc) endpoints.

    Seven coefficients against six boundary conditions: the free direction
    is fixed by minimizing the integral of squared jerk ("min-jerk") or by
    dropping the t^6 term ("quintic").  The two coincide analytically:
    the Euler-Lagrange condition for minimum squared jerk is p^(6) = 0.
    """
    if not T > 0:
        raise ValueError("T must be > 0")
    if kind not in ("min-jerk", "quintic"):
        raise ValueError(f"unknown polynomial kind '{kind}'")

    def bounds_matrix(ncoef):
        B = np.zeros((6, ncoef))
        B[0, 0] = 1.0
        B[1, 1] = 1.0
        B[2, 2] = 2.0
        for i in range(ncoef):
            B[3, i] = T ** i
            if i >= 1:
                B[4, i] = i * T ** (i - 1)
            if i >= 2:
                B[5, i] = i * (i - 1) * T ** (i - 2)
        return B

    rhs = np.array([x0, v0, a0, x1, v1, a1])
    if kind == "quintic":
        coeffs = np.zeros(7)
        coeffs[:6] = np.linalg.solve(bounds_matrix(6), rhs)
    else:
        # minimize integral of squared jerk subject to the boundary rows
        B = bounds_matrix(7)
        G = np.zeros((7, 7))
        for i in range(3, 7):
            for j in range(3, 7):
                ci = i * (i - 1) * (i - 2)
                cj = j * (j - 1) * (j - 2)
                G[i, j] = ci * cj * T ** (i + j - 5) / (i + j - 5)
        K = np.zeros((13, 13))
        K[:7, :7] = 2.0 * G
        K[:7, 7:] = B.T
        K[7:, :7] = B
        sol = np.linalg.solve(K, np.concatenate([np.zeros(7), rhs]))
        coeffs = sol[:7]
    return PolynomialTrajectory(coeffs, T, (x0, v0, a0, x1, v1, a1))
