"""Model property suite: dynamics identity checks on random states.

Used by the ``verify`` CLI command and by the acceptance tests.  Each
check is an independent numerical oracle (finite differences, energy
balance, coordinate-change invariance) run against the analytic
implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Kinematics, integrate
from .model import RobotModel, SystemState
from .prefabs import random_state
from .spatial import so3_log


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} worst {self.worst:.3e}  (tol {self.tolerance:.1e})"


def _shifted(model: RobotModel, state: SystemState, direction: np.ndarray, eps: float) -> SystemState:
    """Configuration moved along ``direction * eps`` (velocity untouched)."""
    probe = SystemState(state.quat, state.pos, state.q, direction * np.sign(eps))
    out = integrate(probe, np.zeros(model.nv), abs(eps))
    return SystemState(out.quat, out.pos, out.q, state.nu)


def run_property_suite(model: RobotModel, n_states: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    nv = model.nv

    sym_w = pd_w = cons_w = skew_w = ke_w = grav_w = jac_w = drift_w = fdres_w = 0.0
    pd_ok = True

    frames = model.frame_names()
    for i in range(n_states):
        st = random_state(model, seed=int(rng.integers(0, 2**31)))
        kin = Kinematics(model, st)
        M = kin.M
        sym_w = max(sym_w, float(np.max(np.abs(M - M.T))))
        try:
            np.linalg.cholesky(0.5 * (M + M.T))
        except np.linalg.LinAlgError:
            pd_ok = False

        h, tg, C = kin.bias, kin.gravity, kin.C
        cons_w = max(cons_w, float(np.max(np.abs(C @ st.nu - (h - tg)))))

        # gravity: base linear rows are -(total weight)
        grav_w = max(grav_w, float(np.max(np.abs(tg[:3] + model.total_mass * model.gravity))))

        cd = kin.com_dynamics()
        ke_w = max(ke_w, abs(0.5 * st.nu @ M @ st.nu - 0.5 * cd.nu_p @ cd.M_c @ cd.nu_p))
        grav_w = max(grav_w, float(np.max(np.abs(cd.T.T @ tg - cd.gravity))))

        # Mdot - 2C skew-symmetry, central finite difference along nu
        if i < max(10, n_states // 5):
            eps = 1e-6
            Mp = Kinematics(model, _shifted(model, st, st.nu, eps)).M
            Mm = Kinematics(model, _shifted(model, st, st.nu, -eps)).M
            Sk = (Mp - Mm) / (2 * eps) - 2 * C
            skew_w = max(skew_w, float(np.max(np.abs(Sk + Sk.T))))

        # frame Jacobian / drift finite differences
        name = frames[i % len(frames)]
        J = kin.frame_jacobian(name)
        d = rng.normal(size=nv)
        d /= np.linalg.norm(d)
        eps = 1e-7
        kp = Kinematics(model, _shifted(model, st, d, eps))
        dlin = (kp.frame_position(name) - kin.frame_position(name)) / eps
        dang = so3_log(kp.frame_rotation(name) @ kin.frame_rotation(name).T) / eps
        jac_w = max(jac_w, float(np.max(np.abs(dlin - (J @ d)[:3]))),
                    float(np.max(np.abs(dang - (J @ d)[3:]))))

        eps = 1e-6
        kq = Kinematics(model, _shifted(model, st, st.nu, eps))
        Jd_fd = (kq.frame_jacobian(name) - J) / eps
        drift_w = max(drift_w, float(np.max(np.abs(Jd_fd @ st.nu - kin.frame_drift(name)))))

        # forward-dynamics residual
        tau = rng.normal(size=model.n) * 10.0
        rhs = -h
        rhs[6:] += tau
        nu_dot = np.linalg.solve(M, rhs)
        res = M @ nu_dot + h
        res[6:] -= tau
        fdres_w = max(fdres_w, float(np.max(np.abs(res))))

    return [
        CheckResult("mass matrix symmetry", sym_w <= 1e-10, sym_w, 1e-10),
        CheckResult("mass matrix positive definite", pd_ok, 0.0 if pd_ok else 1.0, 0.0),
        CheckResult("Coriolis consistency |C nu-(h-tg)|", cons_w <= 1e-9, cons_w, 1e-9),
        CheckResult("Mdot - 2C skew-symmetry", skew_w <= 1e-6, skew_w, 1e-6),
        CheckResult("CoM coordinate change (KE, gravity)", max(ke_w, grav_w) <= 1e-9, max(ke_w, grav_w), 1e-9),
        CheckResult("frame Jacobian finite difference", jac_w <= 1e-5, jac_w, 1e-5),
        CheckResult("frame drift finite difference", drift_w <= 1e-4, drift_w, 1e-4),
        CheckResult("forward dynamics residual", fdres_w <= 1e-8, fdres_w, 1e-8),
    ]
