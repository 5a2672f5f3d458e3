"""Passivity-based whole-body controller.

Full-rank task stack over the CoM-frame coordinates nu_p = (v_com,
w_base, joint rates): a 6D CoM/orientation tracking task, stationary
contact tasks producing the ground-reaction-force rows, and impedance
tasks for the remaining degrees of freedom (swing feet in flight, all
feet when the base is welded to a crane).

The GRF distribution QP solves the first six rows of the desired
closed-loop dynamics for the contact wrenches; the joint torques follow
from the last n rows.  An extra contact-velocity damping term is active
in the landing phase only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ComDynamics, Kinematics
from .id_wbc import ContactSet, ControlOutput, friction_and_torque_rows
from .model import RobotModel, SystemState
from .qp import QpProblem, QpSettings, QpSolver
from .spatial import orientation_error

PHASES = ("stance", "jump", "flight", "landing")


@dataclass
class ImpedanceTask:
    """Cartesian impedance on a frame, used for non-contact DoF.

    ``mask`` selects the controlled components (x, y, z, wx, wy, wz);
    only those rows enter the stack.
    """

    frame: str
    kp: np.ndarray
    kd: np.ndarray
    mask: np.ndarray = field(default_factory=lambda: np.ones(6, dtype=bool))
    ref_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ref_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    ref_vel: np.ndarray = field(default_factory=lambda: np.zeros(6))
    ref_acc: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.kp = np.broadcast_to(np.asarray(self.kp, dtype=float), (6,)).copy()
        self.kd = np.broadcast_to(np.asarray(self.kd, dtype=float), (6,)).copy()
        self.mask = np.asarray(self.mask, dtype=bool).reshape(6)
        if not self.mask.any():
            raise ValueError(f"impedance task '{self.frame}': empty mask")

    @property
    def rows(self) -> int:
        return int(self.mask.sum())

    def set_reference(self, pos=None, rot=None, vel=None, acc=None):
        if pos is not None:
            self.ref_pos = np.asarray(pos, dtype=float).reshape(3)
        if rot is not None:
            self.ref_rot = np.asarray(rot, dtype=float).reshape(3, 3)
        if vel is not None:
            self.ref_vel = np.asarray(vel, dtype=float).reshape(6)
        if acc is not None:
            self.ref_acc = np.asarray(acc, dtype=float).reshape(6)

    def wrench(self, pos, rot, vel6) -> np.ndarray:
        """Masked impedance force K_p e + K_d de."""
        err = np.zeros(6)
        err[:3] = self.ref_pos - pos
        err[3:] = orientation_error(self.ref_rot, rot)
        return (self.kp * err + self.kd * (self.ref_vel - vel6))[self.mask]


@dataclass
class PbTaskStack:
    """Task stack configuration plus current CoM/orientation references."""

    com_kp: np.ndarray
    com_kd: np.ndarray
    contact_frames: tuple[str, ...] = ()
    impedance: list[ImpedanceTask] = field(default_factory=list)
    Q_c: np.ndarray = field(default_factory=lambda: np.ones(6))
    Q_f: np.ndarray | float = 1e-5
    f_grf_desired: np.ndarray | None = None
    d_pbc: dict[str, np.ndarray] = field(default_factory=dict)   # per contact, 6 diag
    condition_bound: float = 1e6
    com_ref_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    com_ref_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    com_ref_vel: np.ndarray = field(default_factory=lambda: np.zeros(6))
    com_ref_acc: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.com_kp = np.broadcast_to(np.asarray(self.com_kp, dtype=float), (6,)).copy()
        self.com_kd = np.broadcast_to(np.asarray(self.com_kd, dtype=float), (6,)).copy()
        self.Q_c = np.broadcast_to(np.asarray(self.Q_c, dtype=float), (6,)).copy()
        if np.any(self.Q_c < 0):
            raise ValueError("Q_c must be >= 0")
        for f, dvec in self.d_pbc.items():
            self.d_pbc[f] = np.broadcast_to(np.asarray(dvec, dtype=float), (6,)).copy()
            if np.any(self.d_pbc[f] < 0):
                raise ValueError("D_PBC must be >= 0")

    def set_com_reference(self, pos=None, rot=None, vel=None, acc=None):
        if pos is not None:
            self.com_ref_pos = np.asarray(pos, dtype=float).reshape(3)
        if rot is not None:
            self.com_ref_rot = np.asarray(rot, dtype=float).reshape(3, 3)
        if vel is not None:
            self.com_ref_vel = np.asarray(vel, dtype=float).reshape(6)
        if acc is not None:
            self.com_ref_acc = np.asarray(acc, dtype=float).reshape(6)

    def qf_diag(self, nc: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.Q_f, dtype=float), (6 * nc,)).copy()


class StackSingular(RuntimeError):
    """Stack Jacobian condition number exceeded the configured bound."""


def stack_jacobian(model: RobotModel, state: SystemState, stack: PbTaskStack,
                   flight: bool = False, kin: Kinematics | None = None,
                   cd: ComDynamics | None = None):
    """Square task-stack Jacobian in nu_p coordinates, plus its condition.

    Row order: CoM/orientation identity block, contact rows (impedance
    rows of the same frames in flight), then the other impedance rows.
    """
    kin = kin or Kinematics(model, state)
    cd = cd or kin.com_dynamics()
    nv = model.nv
    rows = [np.hstack([np.eye(6), np.zeros((6, nv - 6))])]
    for f in stack.contact_frames:
        rows.append(kin.frame_jacobian(f) @ cd.T)
    for t in stack.impedance:
        rows.append((kin.frame_jacobian(t.frame) @ cd.T)[t.mask])
    J = np.vstack(rows)
    if J.shape[0] != nv:
        raise ValueError(f"stack is not square: {J.shape[0]} rows for {nv} DoF")
    cond = float(np.linalg.cond(J))
    return J, cond


class PbWbc:
    """One controller instance per robot.

    ``welded_base`` switches to the fixed-base PD+ form used for the
    crane-hung experiments: the stack lives in joint space, gravity is
    fed forward explicitly, and no GRF QP runs.
    """

    def __init__(self, model: RobotModel, stack: PbTaskStack, mu: float = 0.8,
                 welded_base: bool = False, settings: QpSettings | None = None,
                 damping_lambda: float = 1e-6,
                 cop_box: tuple[float, float] | None = None):
        self.model = model
        self.stack = stack
        self.mu = mu
        self.cop_box = cop_box
        self.welded_base = welded_base
        self.solver = QpSolver(settings)
        self.damping_lambda = damping_lambda
        self._last_f = None
        self.diag_singular = False

    # -- stack pieces -------------------------------------------------------

    def _solve_stack(self, J: np.ndarray, rhs: np.ndarray, cond: float) -> np.ndarray:
        if cond > self.stack.condition_bound:
            self.diag_singular = True
            lam = self.damping_lambda
            return np.linalg.solve(J.T @ J + lam * np.eye(J.shape[0]), J.T @ rhs)
        self.diag_singular = False
        return np.linalg.solve(J, rhs)

    def desired_generalized_motion(self, state: SystemState, flight: bool = False,
                                   kin: Kinematics | None = None,
                                   cd: ComDynamics | None = None):
        """(nu_d, dnu_d) in nu_p coordinates from the stacked references.

        Contact rows demand zero velocity; in flight the CoM/orientation
        rows are overwritten with the current measurement and a ballistic
        acceleration.
        """
        model = self.model
        kin = kin or Kinematics(model, state)
        cd = cd or kin.com_dynamics()
        stack = self.stack
        J, cond = stack_jacobian(model, state, stack, flight=flight, kin=kin, cd=cd)
        nv = model.nv

        xdot_d = np.zeros(nv)
        xddot_d = np.zeros(nv)
        jdot_nu = np.zeros(nv)
        if flight:
            xdot_d[0:6] = cd.nu_p[0:6]
            xddot_d[0:3] = model.gravity
        else:
            xdot_d[0:6] = stack.com_ref_vel
            xddot_d[0:6] = stack.com_ref_acc

        # Tdot nu_p contribution to the stacked drift
        tdot_nup = cd.Tdot @ cd.nu_p
        row = 6
        for f in stack.contact_frames:
            jdot_nu[row:row + 6] = kin.frame_drift(f) + kin.frame_jacobian(f) @ tdot_nup
            row += 6
        for t in stack.impedance:
            nr = t.rows
            xdot_d[row:row + nr] = t.ref_vel[t.mask]
            xddot_d[row:row + nr] = t.ref_acc[t.mask]
            drift = kin.frame_drift(t.frame) + kin.frame_jacobian(t.frame) @ tdot_nup
            jdot_nu[row:row + nr] = drift[t.mask]
            row += nr

        nu_d = self._solve_stack(J, xdot_d, cond)
        dnu_d = self._solve_stack(J, xddot_d - jdot_nu, cond)
        return nu_d, dnu_d, J, cond

    def com_impedance_wrench(self, kin: Kinematics, cd: ComDynamics) -> np.ndarray:
        stack = self.stack
        err = np.zeros(6)
        err[:3] = stack.com_ref_pos - cd.com
        err[3:] = orientation_error(stack.com_ref_rot, kin.R[0])
        derr = stack.com_ref_vel - cd.nu_p[0:6]
        return stack.com_kp * err + stack.com_kd * derr

    def grf_qp(self, cd: ComDynamics, nu_d: np.ndarray, dnu_d: np.ndarray,
               w_imp: np.ndarray, J: np.ndarray,
               f_imp_stack: np.ndarray | None = None,
               warm_start: np.ndarray | None = None) -> QpProblem:
        """QP over the contact wrenches: min delta_c' Q_c delta_c + delta_f' Q_f delta_f.

        delta_c is the first-six-row consistency residual of the desired
        closed-loop dynamics; delta_f = f_grf_desired - f_grf.
        """
        stack = self.stack
        nc = len(stack.contact_frames)
        A = J[6:6 + 6 * nc, 0:6].T                     # J_grf,c^T maps f -> CoM rows
        b = -(cd.M_c[0:6] @ dnu_d + cd.C_c[0:6] @ nu_d) + cd.w_g - w_imp
        if stack.impedance and f_imp_stack is not None:
            J_imp_c = J[6 + 6 * nc:, 0:6]
            b = b - J_imp_c.T @ f_imp_stack
        Qc = stack.Q_c
        Qf = stack.qf_diag(nc)
        f_d = stack.f_grf_desired if stack.f_grf_desired is not None else np.zeros(6 * nc)
        H = 2.0 * ((A.T * Qc) @ A + np.diag(Qf))
        g = 2.0 * (A.T @ (Qc * b) - Qf * f_d)
        d = 6 * nc
        contacts = ContactSet(frames=stack.contact_frames, mu=self.mu, cop_box=self.cop_box)
        A_in, lower, upper = friction_and_torque_rows(d, 0, 0, nc, contacts, None,
                                                      force_offset=0)
        return QpProblem(H=H, g=g, A_in=A_in, lower=lower, upper=upper,
                         warm_start=warm_start)

    def compute_torque(self, cd: ComDynamics, nu_d: np.ndarray, dnu_d: np.ndarray,
                       J: np.ndarray, f_grf: np.ndarray, f_imp_stack: np.ndarray,
                       phase: str, kin: Kinematics) -> np.ndarray:
        """Joint torques from the last n rows of the desired closed loop.

        In the landing phase an additional contact-velocity damping term
        -J_grf_j^T D_PBC xdot_grf is applied.
        """
        stack = self.stack
        nc = len(stack.contact_frames)
        tau = cd.M_c[6:] @ dnu_d + cd.C_c[6:] @ nu_d
        if nc:
            J_grf_j = J[6:6 + 6 * nc, 6:]
            tau -= J_grf_j.T @ f_grf
            if phase == "landing" and stack.d_pbc:
                xdot = np.concatenate([kin.frame_velocity(f) for f in stack.contact_frames])
                D = np.concatenate([stack.d_pbc.get(f, np.zeros(6))
                                    for f in stack.contact_frames])
                tau -= J_grf_j.T @ (D * xdot)
        if stack.impedance:
            J_imp_j = J[6 + 6 * nc:, 6:]
            tau += J_imp_j.T @ f_imp_stack
        return tau

    # -- main entry ----------------------------------------------------------

    def control_tick(self, state: SystemState, phase: str = "stance") -> ControlOutput:
        if phase not in PHASES:
            raise ValueError(f"unknown phase '{phase}'")
        if self.welded_base:
            return self._tick_welded(state)
        model = self.model
        kin = Kinematics(model, state)
        cd = kin.com_dynamics()
        flight = phase == "flight"
        nu_d, dnu_d, J, cond = self.desired_generalized_motion(state, flight=flight,
                                                               kin=kin, cd=cd)
        w_imp = np.zeros(6) if flight else self.com_impedance_wrench(kin, cd)
        f_imp_stack = np.concatenate([
            t.wrench(kin.frame_position(t.frame), kin.frame_rotation(t.frame),
                     kin.frame_velocity(t.frame))
            for t in self.stack.impedance]) if self.stack.impedance else np.zeros(0)

        nc = len(self.stack.contact_frames)
        status, iters, fallback = "optimal", 0, False
        if nc and not flight:
            prob = self.grf_qp(cd, nu_d, dnu_d, w_imp, J,
                               f_imp_stack if self.stack.impedance else None)
            sol = self.solver.solve(prob)
            status, iters = sol.status, sol.iterations
            if sol.ok:
                f_grf = sol.x
                self._last_f = f_grf.copy()
            else:
                fallback = True
                f_grf = self._last_f if self._last_f is not None else np.zeros(6 * nc)
        else:
            f_grf = np.zeros(6 * nc)

        tau = self.compute_torque(cd, nu_d, dnu_d, J, f_grf, f_imp_stack, phase, kin)
        forces = {f: f_grf[6 * k:6 * (k + 1)] for k, f in enumerate(self.stack.contact_frames)}
        return ControlOutput(tau, np.zeros(model.nv), forces, status, iters,
                             fallback=fallback)

    # -- welded-base PD+ ------------------------------------------------------

    def _tick_welded(self, state: SystemState) -> ControlOutput:
        model = self.model
        kin = Kinematics(model, state)
        nu_d, dnu_d, J = self.welded_desired_joint_motion(state, kin=kin)
        tasks = self.stack.impedance
        f_imp = np.concatenate([
            t.wrench(kin.frame_position(t.frame), kin.frame_rotation(t.frame),
                     kin.frame_velocity(t.frame)) for t in tasks])
        M = kin.M
        C = kin.C
        tau = M[6:, 6:] @ dnu_d + C[6:, 6:] @ nu_d + kin.gravity[6:] + J.T @ f_imp
        return ControlOutput(tau, np.zeros(model.nv), {}, "optimal", 0)

    def welded_desired_joint_motion(self, state: SystemState, kin: Kinematics | None = None):
        """(nu_d_j, dnu_d_j, J) for the welded joint-space stack."""
        kin = kin or Kinematics(self.model, state)
        tasks = self.stack.impedance
        if sum(t.rows for t in tasks) != self.model.n:
            raise ValueError("welded stack must cover all joint DoF")
        J = np.vstack([kin.frame_jacobian(t.frame)[t.mask][:, 6:] for t in tasks])
        cond = float(np.linalg.cond(J))
        xdot_d = np.concatenate([t.ref_vel[t.mask] for t in tasks])
        xddot_d = np.concatenate([t.ref_acc[t.mask] for t in tasks])
        drift = np.concatenate([kin.frame_drift(t.frame)[t.mask] for t in tasks])
        return self._solve_stack(J, xdot_d, cond), self._solve_stack(J, xddot_d - drift, cond), J
