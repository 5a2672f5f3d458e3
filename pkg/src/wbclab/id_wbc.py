"""Inverse-dynamics whole-body controller.

Task-space PD errors become desired accelerations; one QP over
(nu_dot, tau, f_c) minimizes the weighted acceleration residuals subject
to the floating-base dynamics, stationary-contact, friction-pyramid, and
torque-limit constraints.  Soft prioritization through the task weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Kinematics
from .model import RobotModel, SystemState
from .qp import QpProblem, QpSettings, QpSolution, QpSolver
from .spatial import orientation_error


@dataclass
class TaskSpec:
    """One task controller: target frame (or the CoM), gains, weight.

    ``mask`` selects controlled components out of (x, y, z, wx, wy, wz);
    the CoM target only uses the linear part.  References are updated in
    place by the scenario each tick.
    """

    name: str
    target: str                                  # frame name or "com"
    kp: np.ndarray
    kd: np.ndarray
    weight: np.ndarray
    mask: np.ndarray = field(default_factory=lambda: np.ones(6, dtype=bool))
    ref_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ref_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    ref_vel: np.ndarray = field(default_factory=lambda: np.zeros(6))
    ref_acc: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.kp = np.broadcast_to(np.asarray(self.kp, dtype=float), (6,)).copy()
        self.kd = np.broadcast_to(np.asarray(self.kd, dtype=float), (6,)).copy()
        self.weight = np.broadcast_to(np.asarray(self.weight, dtype=float), (6,)).copy()
        self.mask = np.asarray(self.mask, dtype=bool).reshape(6)
        if np.any(self.kp < 0) or np.any(self.kd < 0) or np.any(self.weight < 0):
            raise ValueError(f"task '{self.name}': gains and weights must be >= 0")
        if self.target == "com":
            self.mask = self.mask & np.array([1, 1, 1, 0, 0, 0], dtype=bool)
        if not self.mask.any():
            raise ValueError(f"task '{self.name}': empty component mask")

    def set_reference(self, pos=None, rot=None, vel=None, acc=None):
        if pos is not None:
            self.ref_pos = np.asarray(pos, dtype=float).reshape(3)
        if rot is not None:
            self.ref_rot = np.asarray(rot, dtype=float).reshape(3, 3)
        if vel is not None:
            self.ref_vel = np.asarray(vel, dtype=float).reshape(6)
        if acc is not None:
            self.ref_acc = np.asarray(acc, dtype=float).reshape(6)


@dataclass
class ContactSet:
    frames: tuple[str, ...]
    mu: float = 0.8
    cop_box: tuple[float, float] | None = None    # (half_x, half_y) CoP box
    velocity_damping: float = 0.0   # 1/s; drives residual contact velocity to zero

    def __post_init__(self):
        if self.frames and not self.mu > 0:
            raise ValueError("friction coefficient must be > 0")


@dataclass
class ControlOutput:
    tau: np.ndarray
    nu_dot: np.ndarray
    contact_forces: dict[str, np.ndarray]
    status: str
    iterations: int
    fallback: bool = False
    solution: QpSolution | None = None
    problem: QpProblem | None = None


def _task_state(kin: Kinematics, task: TaskSpec):
    if task.target == "com":
        pos = kin.com
        vel6 = np.concatenate([kin.com_velocity, kin.state.nu[3:6]])
        J = np.zeros((6, kin.model.nv))
        J[:3] = kin.com_jacobian
        drift = np.concatenate([kin.com_drift(), np.zeros(3)])
        rot = np.eye(3)
    else:
        pos = kin.frame_position(task.target)
        vel6 = kin.frame_velocity(task.target)
        J = kin.frame_jacobian(task.target)
        drift = kin.frame_drift(task.target)
        rot = kin.frame_rotation(task.target)
    return pos, rot, vel6, J, drift


def desired_task_acceleration(task: TaskSpec, state: SystemState, model: RobotModel,
                              kin: Kinematics | None = None) -> np.ndarray:
    """Masked desired acceleration: acc_ref + Kd (vel_ref - vel) + Kp err."""
    kin = kin or Kinematics(model, state)
    pos, rot, vel6, _, _ = _task_state(kin, task)
    err = np.zeros(6)
    err[:3] = task.ref_pos - pos
    err[3:] = orientation_error(task.ref_rot, rot)
    acc = task.ref_acc + task.kd * (task.ref_vel - vel6) + task.kp * err
    return acc[task.mask]


def assemble_qp(model: RobotModel, state: SystemState, tasks: list[TaskSpec],
                contacts: ContactSet, torque_limits: np.ndarray | None = None,
                welded_base: bool = False, kin: Kinematics | None = None,
                warm_start: np.ndarray | None = None) -> QpProblem:
    """Whole-body QP over x = (nu_dot, tau, f_c)."""
    if not tasks:
        raise ValueError("at least one task is required")
    kin = kin or Kinematics(model, state)
    nv, n = model.nv, model.n
    nc = len(contacts.frames)
    d = nv + n + 6 * nc

    H = np.zeros((d, d))
    g = np.zeros(d)
    for task in tasks:
        _, _, _, J, drift = _task_state(kin, task)
        acc_d = desired_task_acceleration(task, state, model, kin=kin)
        Jm = J[task.mask]
        W = task.weight[task.mask]
        b = acc_d - drift[task.mask]
        H[:nv, :nv] += 2.0 * (Jm.T * W) @ Jm
        g[:nv] += -2.0 * Jm.T @ (W * b)

    M = kin.M
    h = kin.bias
    Jc = [kin.frame_jacobian(f) for f in contacts.frames]
    drifts = [kin.frame_drift(f) for f in contacts.frames]

    if welded_base:
        # joint-row dynamics only; the weld supplies the base wrench
        A_dyn = np.zeros((n, d))
        A_dyn[:, :nv] = M[6:, :]
        A_dyn[:, nv:nv + n] = -np.eye(n)
        for k, J in enumerate(Jc):
            A_dyn[:, nv + n + 6 * k: nv + n + 6 * (k + 1)] = -J.T[6:, :]
        b_dyn = -h[6:]
        A_base = np.zeros((6, d))
        A_base[:, 0:6] = np.eye(6)
        A_eq = [np.vstack([A_dyn, A_base])]
        b_eq = [np.concatenate([b_dyn, np.zeros(6)])]
    else:
        A_dyn = np.zeros((nv, d))
        A_dyn[:, :nv] = M
        A_dyn[6:, nv:nv + n] = -np.eye(n)
        for k, J in enumerate(Jc):
            A_dyn[:, nv + n + 6 * k: nv + n + 6 * (k + 1)] = -J.T
        A_eq = [A_dyn]
        b_eq = [-h]

    # stationary contacts: J nu_dot + Jdot nu = 0, with an optional damping
    # term on the residual contact velocity (active only while a foot still
    # moves, e.g. right after touchdown; vanishes on established contacts)
    beta = contacts.velocity_damping
    for k, (J, dr) in enumerate(zip(Jc, drifts)):
        A_con = np.zeros((6, d))
        A_con[:, :nv] = J
        A_eq.append(A_con)
        rhs = -dr
        if beta > 0.0:
            rhs = rhs - beta * (J @ state.nu)
        b_eq.append(rhs)

    A_in, lower, upper = friction_and_torque_rows(
        d, nv, n, nc, contacts,
        torque_limits if torque_limits is not None else model.torque_limit)

    return QpProblem(H=H, g=g, A_eq=np.vstack(A_eq), b_eq=np.concatenate(b_eq),
                     A_in=A_in, lower=lower, upper=upper, warm_start=warm_start)


def friction_and_torque_rows(d: int, nv: int, n: int, nc: int, contacts: ContactSet,
                             torque_limits: np.ndarray,
                             force_offset: int | None = None):
    """Friction pyramid (|f_x|, |f_y| <= mu f_z / sqrt(2), f_z >= 0), optional
    CoP box, and torque bounds.  Shared between both controllers."""
    rows = []
    lo = []
    up = []
    off0 = nv + n if force_offset is None else force_offset
    mu_t = contacts.mu / np.sqrt(2.0) if nc else 0.0
    for k in range(nc):
        off = off0 + 6 * k
        r = np.zeros(d)
        r[off + 2] = 1.0                         # f_z >= 0
        rows.append(r)
        lo.append(0.0)
        up.append(np.inf)
        for axis in (0, 1):
            r = np.zeros(d)
            r[off + axis] = 1.0
            r[off + 2] = -mu_t
            rows.append(r)                       # f_a - mu_t f_z <= 0
            lo.append(-np.inf)
            up.append(0.0)
            r = np.zeros(d)
            r[off + axis] = 1.0
            r[off + 2] = mu_t
            rows.append(r)                       # f_a + mu_t f_z >= 0
            lo.append(0.0)
            up.append(np.inf)
        if contacts.cop_box is not None:
            hx, hy = contacts.cop_box
            for tq, lever in ((4, hx), (3, hy)):  # tau_y vs x-extent, tau_x vs y-extent
                r = np.zeros(d)
                r[off + tq] = 1.0
                r[off + 2] = -lever
                rows.append(r)
                lo.append(-np.inf)
                up.append(0.0)
                r = np.zeros(d)
                r[off + tq] = 1.0
                r[off + 2] = lever
                rows.append(r)
                lo.append(0.0)
                up.append(np.inf)
    if n and torque_limits is not None:
        T = np.zeros((n, d))
        T[:, nv:nv + n] = np.eye(n)
        rows.append(T)
        lo.append(-torque_limits)
        up.append(torque_limits)
    if not rows:
        return None, None, None
    A = np.vstack([r if r.ndim == 2 else r.reshape(1, -1) for r in rows])
    lower = np.concatenate([np.atleast_1d(v) for v in lo])
    upper = np.concatenate([np.atleast_1d(v) for v in up])
    return A, lower, upper


class IdWbc:
    """One controller instance per robot; holds solver workspace and the
    infeasibility fallback state (hold last torque, then damp)."""

    def __init__(self, model: RobotModel, tasks: list[TaskSpec], contacts: ContactSet,
                 welded_base: bool = False, settings: QpSettings | None = None,
                 torque_limits: np.ndarray | None = None,
                 fallback_damping: float = 2.0, fallback_hold_ticks: int = 10):
        self.model = model
        self.tasks = {t.name: t for t in tasks}
        self.contacts = contacts
        self.welded_base = welded_base
        self.solver = QpSolver(settings)
        self.torque_limits = model.torque_limit if torque_limits is None else np.asarray(torque_limits, dtype=float)
        self.fallback_damping = fallback_damping
        self.fallback_hold_ticks = fallback_hold_ticks
        self._last_tau = np.zeros(model.n)
        self._fail_count = 0

    def set_contacts(self, contacts: ContactSet) -> None:
        if tuple(contacts.frames) != tuple(self.contacts.frames):
            self.solver.reset()
        self.contacts = contacts

    def control_tick(self, state: SystemState) -> ControlOutput:
        model = self.model
        kin = Kinematics(model, state)
        problem = assemble_qp(model, state, list(self.tasks.values()), self.contacts,
                              torque_limits=self.torque_limits,
                              welded_base=self.welded_base, kin=kin)
        sol = self.solver.solve(problem)
        nv, n = model.nv, model.n
        if sol.ok:
            tau = sol.x[nv:nv + n]
            nu_dot = sol.x[:nv]
            forces = {f: sol.x[nv + n + 6 * k: nv + n + 6 * (k + 1)]
                      for k, f in enumerate(self.contacts.frames)}
            self._last_tau = tau.copy()
            self._fail_count = 0
            return ControlOutput(tau, nu_dot, forces, sol.status, sol.iterations,
                                 fallback=False, solution=sol, problem=problem)
        # infeasible or stalled: hold the previous torque briefly, then damp
        self._fail_count += 1
        if self._fail_count <= self.fallback_hold_ticks:
            tau = self._last_tau.copy()
        else:
            tau = -self.fallback_damping * state.nu[6:]
        return ControlOutput(tau, np.zeros(nv), {f: np.zeros(6) for f in self.contacts.frames},
                             sol.status, sol.iterations, fallback=True,
                             solution=sol, problem=problem)
