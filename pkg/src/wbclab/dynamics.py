"""Floating-base rigid-body kinematics and dynamics.

Everything is computed in world-aligned coordinates: body Jacobians and
spatial quantities use the (angular; linear-at-origin) spatial convention
internally, while the public frame/task interface uses (linear; angular)
6-vectors in the inertial frame, matching nu = (v_base, w_base, nu_joints).

The Coriolis matrix uses the body-level factorization

    C = sum_b J_b^T ( I_b Jdot_b + (v_b x*) I_b J_b )

which satisfies C nu = h - tau_g and keeps Mdot - 2C skew-symmetric, the
property the passivity-based controller relies on.

The plant integrates at 10 kHz, so the inner loops avoid np.cross and
per-call temporaries; small cross products are written out in scalar
form and per-body quantities are batched where the tree recursion allows.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .model import ModelError, RobotModel, SystemState
from .spatial import quat_from_rotvec, quat_mul, quat_normalize, quat_to_rot, skew

if os.environ.get("WBCLAB_NO_NUMBA"):
    _fast = None
else:
    try:
        from . import _fastdyn as _fast
    except Exception:  # numba unavailable; pure-numpy path covers everything
        _fast = None


@dataclass
class ComDynamics:
    """Dynamics quantities after replacing base translation by the CoM.

    ``nu_p`` = (v_com, w_base, joint rates).  ``gravity`` equals
    (-w_g, 0_n) exactly, with w_g = (m_total * g, 0_3).
    """

    M_c: np.ndarray
    C_c: np.ndarray
    w_g: np.ndarray                      # (6,) = (m g, 0)
    gravity: np.ndarray                  # (nv,) = (-w_g, 0_n)
    com: np.ndarray
    com_velocity: np.ndarray
    nu_p: np.ndarray
    T: np.ndarray                        # nu = T @ nu_p
    Tdot: np.ndarray


def _cross(a, b, out):
    a0, a1, a2 = a
    b0, b1, b2 = b
    out[0] = a1 * b2 - a2 * b1
    out[1] = a2 * b0 - a0 * b2
    out[2] = a0 * b1 - a1 * b0
    return out


def _batch_skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _batch_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _batch_cross_force(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(v x*) f for stacked (.., 6) spatial motion/force arrays."""
    out = np.empty_like(f)
    w = v[..., :3]
    vo = v[..., 3:]
    out[..., :3] = _batch_cross(w, f[..., :3]) + _batch_cross(vo, f[..., 3:])
    out[..., 3:] = _batch_cross(w, f[..., 3:])
    return out


class Kinematics:
    """Per-(model, state) cache of kinematic and dynamic quantities.

    Construction runs forward kinematics and body velocities; heavier
    quantities (mass matrix, bias, Jacobians, Coriolis) are computed on
    first access and cached.  Controllers build one per tick, the plant
    one per physics substep.
    """

    def __init__(self, model: RobotModel, state: SystemState):
        self.model = model
        self.state = state
        nb, n, nv = model.nb, model.n, model.nv

        self._M = None
        self._bias = None
        self._gravity = None
        self._C = None
        self._J_all = None
        self._Jd_all = None
        self._abias = None
        self._com_cache = None

        if _fast is not None:
            (self.R, self.p, self.S, self.Sd, self.v,
             self.com_w, self.I) = _fast.fk_kernel(
                model.body_parent, model.body_joint, model.is_revolute,
                model.joint_axis, model.joint_origin,
                quat_to_rot(state.quat), state.pos, state.q, state.nu,
                model.body_mass, model.body_com, model.body_inertia)
            return

        R = np.empty((nb, 3, 3))
        p = np.empty((nb, 3))
        R[0] = quat_to_rot(state.quat)
        p[0] = state.pos

        S = np.zeros((nv, 6))            # world spatial axis per velocity coordinate
        Sd = np.zeros((nv, 6))           # its time derivative
        v = np.empty((nb, 6))            # body spatial velocities (w; v_origin)

        nu = state.nu
        v_b = nu[0:3]
        w_b = nu[3:6]
        # base block: coordinates (v_b, w_b) -> spatial (w; v_origin)
        S[0, 3] = S[1, 4] = S[2, 5] = 1.0
        S[3, 0] = S[4, 1] = S[5, 2] = 1.0
        pb = p[0]
        # S[3 + k, 3:] = skew(p_b) @ e_k  (columns of skew(p_b))
        S[3, 4] = pb[2]
        S[3, 5] = -pb[1]
        S[4, 3] = -pb[2]
        S[4, 5] = pb[0]
        S[5, 3] = pb[1]
        S[5, 4] = -pb[0]
        Sd[3, 4] = v_b[2]
        Sd[3, 5] = -v_b[1]
        Sd[4, 3] = -v_b[2]
        Sd[4, 5] = v_b[0]
        Sd[5, 3] = v_b[1]
        Sd[5, 4] = -v_b[0]
        v[0, :3] = w_b
        _cross(pb, w_b, v[0, 3:])
        v[0, 3:] += v_b

        if n:
            qj = state.q
            dq = nu[6:]
            # batched joint rotations (Rodrigues); identity rows for prismatic
            ang = np.where(model.is_revolute, qj, 0.0)
            c = np.cos(ang)
            s = np.sin(ang)
            Rj = c[:, None, None] * np.eye(3) + s[:, None, None] * model.axis_skew \
                + (1.0 - c)[:, None, None] * model.axis_outer

            ax = model.joint_axis
            org = model.joint_origin
            parent = model.body_parent
            jix = model.body_joint
            revolute = model.is_revolute

            for b in range(1, nb):
                pa = parent[b]
                k = jix[b]
                Rp = R[pa]
                pj = Rp @ org[k]
                pj += p[pa]
                a_w = Rp @ ax[k]
                row = 6 + k
                srow = S[row]
                if revolute[k]:
                    np.matmul(Rp, Rj[k], out=R[b])
                    p[b] = pj
                    srow[:3] = a_w
                    _cross(pj, a_w, srow[3:])
                else:
                    R[b] = Rp
                    p[b] = pj + a_w * qj[k]
                    srow[3:] = a_w
                # sdot = v_parent x srow (motion cross)
                vp = v[pa]
                sdrow = Sd[row]
                _cross(vp[:3], srow[:3], sdrow[:3])
                _cross(vp[3:], srow[:3], sdrow[3:])
                tmp = np.empty(3)
                sdrow[3:] += _cross(vp[:3], srow[3:], tmp)
                v[b] = v[pa] + srow * dq[k]

        self.R = R
        self.p = p
        self.S = S
        self.Sd = Sd
        self.v = v

        # world-frame CoM positions and spatial inertias, batched
        com_w = p + np.einsum("bij,bj->bi", R, model.body_com)
        self.com_w = com_w
        mass = model.body_mass
        RIRt = np.matmul(np.matmul(R, model.body_inertia), R.transpose(0, 2, 1))
        cs = _batch_skew(com_w)
        I = np.empty((nb, 6, 6))
        I[:, :3, :3] = RIRt + mass[:, None, None] * np.matmul(cs, cs.transpose(0, 2, 1))
        mcs = mass[:, None, None] * cs
        I[:, :3, 3:] = mcs
        I[:, 3:, :3] = mcs.transpose(0, 2, 1)
        I[:, 3:, 3:] = mass[:, None, None] * np.eye(3)
        self.I = I

    # -- mass matrix (composite rigid body) --------------------------------

    @property
    def M(self) -> np.ndarray:
        if self._M is None:
            if _fast is not None:
                self._M = _fast.crba_kernel(self.model.body_parent,
                                            self.model.body_joint, self.S, self.I)
                return self._M
            model = self.model
            nb, nv = model.nb, model.nv
            Ic = self.I.copy()
            parent = model.body_parent
            for b in range(nb - 1, 0, -1):
                Ic[parent[b]] += Ic[b]
            M = np.zeros((nv, nv))
            S = self.S
            Sb = S[0:6]                              # rows are base spatial axes
            M[0:6, 0:6] = Sb @ Ic[0] @ Sb.T
            jix = model.body_joint
            anc = model.ancestor_rows
            for b in range(nb - 1, 0, -1):
                row = 6 + jix[b]
                F = Ic[b] @ S[row]
                M[row, row] = S[row] @ F
                for ka in anc[b]:
                    m = S[ka] @ F
                    M[row, ka] = m
                    M[ka, row] = m
                base_cols = Sb @ F
                M[row, 0:6] = base_cols
                M[0:6, row] = base_cols
            self._M = M
        return self._M

    # -- recursive Newton-Euler --------------------------------------------

    def rnea(self, nu_dot: np.ndarray, gravity: bool = True,
             body_forces: np.ndarray | None = None) -> np.ndarray:
        """Generalized force M nu_dot + C nu + tau_g - (applied body forces).

        ``body_forces`` is an optional (nb, 6) array of spatial forces
        (moment-about-origin; force) applied to each body.
        """
        model = self.model
        nb = model.nb
        S, Sd, v, I = self.S, self.Sd, self.v, self.I
        parent = model.body_parent
        jix = model.body_joint
        nu = self.state.nu

        a = np.empty((nb, 6))
        a[0] = S[0:6].T @ nu_dot[0:6] + Sd[0:6].T @ nu[0:6]
        dq = nu[6:]
        for b in range(1, nb):
            k = jix[b]
            row = 6 + k
            a[b] = a[parent[b]] + S[row] * nu_dot[6 + k] + Sd[row] * dq[k]

        f = np.einsum("bij,bj->bi", I, a) + _batch_cross_force(v, np.einsum("bij,bj->bi", I, v))
        if gravity:
            mg = model.body_mass[:, None] * model.gravity
            f[:, :3] -= _batch_cross(self.com_w, mg)
            f[:, 3:] -= mg
        if body_forces is not None:
            f -= body_forces

        for b in range(nb - 1, 0, -1):
            f[parent[b]] += f[b]

        tau = np.empty(model.nv)
        tau[0:6] = S[0:6] @ f[0]
        for b in range(1, nb):
            k = jix[b]
            tau[6 + k] = S[6 + k] @ f[b]
        return tau

    @property
    def bias(self) -> np.ndarray:
        """h(q, nu) = C nu + tau_g."""
        if self._bias is None:
            if _fast is not None:
                model = self.model
                self._bias = _fast.bias_kernel(
                    model.body_parent, model.body_joint, self.S, self.Sd, self.v,
                    self.I, self.com_w, model.body_mass, model.gravity,
                    self.state.nu, True)
            else:
                self._bias = self.rnea(_ZERO_CACHE.get(self.model.nv), gravity=True)
        return self._bias

    @property
    def gravity(self) -> np.ndarray:
        """tau_g(q): generalized gravity force (appears on the LHS)."""
        if self._gravity is None:
            model = self.model
            if _fast is not None:
                self._gravity = _fast.gravity_kernel(
                    model.body_parent, model.body_joint, self.S,
                    self.com_w, model.body_mass, model.gravity)
                return self._gravity
            nb = model.nb
            f = np.empty((nb, 6))
            mg = model.body_mass[:, None] * model.gravity
            f[:, :3] = -_batch_cross(self.com_w, mg)
            f[:, 3:] = -mg
            parent = model.body_parent
            for b in range(nb - 1, 0, -1):
                f[parent[b]] += f[b]
            tau = np.empty(model.nv)
            S = self.S
            tau[0:6] = S[0:6] @ f[0]
            for b in range(1, nb):
                k = model.body_joint[b]
                tau[6 + k] = S[6 + k] @ f[b]
            self._gravity = tau
        return self._gravity

    # -- body Jacobians ------------------------------------------------------

    @property
    def J_all(self) -> np.ndarray:
        """(nb, 6, nv) world spatial Jacobians, v_body = J_all[b] @ nu."""
        if self._J_all is None:
            model = self.model
            J = np.zeros((model.nb, 6, model.nv))
            J[0, :, 0:6] = self.S[0:6].T
            for b in range(1, model.nb):
                k = model.body_joint[b]
                J[b] = J[model.body_parent[b]]
                J[b, :, 6 + k] = self.S[6 + k]
            self._J_all = J
        return self._J_all

    @property
    def Jd_all(self) -> np.ndarray:
        """(nb, 6, nv) time derivatives of J_all."""
        if self._Jd_all is None:
            model = self.model
            Jd = np.zeros((model.nb, 6, model.nv))
            Jd[0, :, 0:6] = self.Sd[0:6].T
            for b in range(1, model.nb):
                k = model.body_joint[b]
                Jd[b] = Jd[model.body_parent[b]]
                Jd[b, :, 6 + k] = self.Sd[6 + k]
            self._Jd_all = Jd
        return self._Jd_all

    @property
    def abias(self) -> np.ndarray:
        """(nb, 6) body spatial bias accelerations Jdot_b @ nu."""
        if self._abias is None:
            model = self.model
            a = np.empty((model.nb, 6))
            a[0] = self.Sd[0:6].T @ self.state.nu[0:6]
            dq = self.state.nu[6:]
            for b in range(1, model.nb):
                k = model.body_joint[b]
                a[b] = a[model.body_parent[b]] + self.Sd[6 + k] * dq[k]
            self._abias = a
        return self._abias

    # -- Coriolis matrix -----------------------------------------------------

    @property
    def C(self) -> np.ndarray:
        if self._C is None:
            J = self.J_all
            Jd = self.Jd_all
            I = self.I
            v = self.v
            nb = self.model.nb
            # B_b = (v_b x*) I_b, batched
            B = np.zeros((nb, 6, 6))
            W = _batch_skew(v[:, :3])
            V = _batch_skew(v[:, 3:])
            B[:, :3, :3] = W
            B[:, :3, 3:] = V
            B[:, 3:, 3:] = W
            K = np.matmul(I, Jd) + np.matmul(np.matmul(B, I), J)
            nv = self.model.nv
            J2 = J.reshape(nb * 6, nv)
            K2 = K.reshape(nb * 6, nv)
            self._C = J2.T @ K2
        return self._C

    # -- frames ---------------------------------------------------------------

    def frame_position(self, name: str) -> np.ndarray:
        b, off = self.model.frame(name)
        return self.p[b] + self.R[b] @ off

    def frame_rotation(self, name: str) -> np.ndarray:
        b, _ = self.model.frame(name)
        return self.R[b]

    def frame_velocity(self, name: str) -> np.ndarray:
        """(linear; angular) world velocity of the frame."""
        b, off = self.model.frame(name)
        pt = self.p[b] + self.R[b] @ off
        out = np.empty(6)
        vb = self.v[b]
        w = vb[:3]
        _cross(w, pt, out[:3])
        out[:3] += vb[3:]
        out[3:] = w
        return out

    def frame_jacobian(self, name: str) -> np.ndarray:
        """6 x nv map from nu to the frame's (linear; angular) world velocity."""
        b, off = self.model.frame(name)
        pt = self.p[b] + self.R[b] @ off
        Jb = self.J_all[b]
        J = np.empty((6, self.model.nv))
        J[:3] = Jb[3:] - skew(pt) @ Jb[:3]
        J[3:] = Jb[:3]
        return J

    def frame_drift(self, name: str) -> np.ndarray:
        """Jdot @ nu for the frame Jacobian, (linear; angular)."""
        b, off = self.model.frame(name)
        pt = self.p[b] + self.R[b] @ off
        ab = self.abias[b]
        vb = self.v[b]
        w = vb[:3]
        v_pt = np.empty(3)
        _cross(w, pt, v_pt)
        v_pt += vb[3:]
        out = np.empty(6)
        t1 = np.empty(3)
        t2 = np.empty(3)
        out[:3] = ab[3:] + _cross(ab[:3], pt, t1) + _cross(w, v_pt, t2)
        out[3:] = ab[:3]
        return out

    def point_jacobian(self, body: int, point_world: np.ndarray) -> np.ndarray:
        """3 x nv linear Jacobian of a world point rigidly on ``body``."""
        Jb = self.J_all[body]
        return Jb[3:] - skew(point_world) @ Jb[:3]

    def body_point_velocity(self, body: int, point_world: np.ndarray) -> np.ndarray:
        vb = self.v[body]
        out = np.empty(3)
        _cross(vb[:3], point_world, out)
        out += vb[3:]
        return out

    # -- CoM ---------------------------------------------------------------

    def _com(self):
        if self._com_cache is None:
            model = self.model
            m = model.body_mass
            mtot = model.total_mass
            com = (m[:, None] * self.com_w).sum(axis=0) / mtot
            J = self.J_all
            Jd = self.Jd_all
            cs = _batch_skew(self.com_w)
            Jlin = J[:, 3:, :] - np.matmul(cs, J[:, :3, :])
            # world velocity of each body CoM point
            cdot = self.v[:, 3:] + _batch_cross(self.v[:, :3], self.com_w)
            Jdlin = Jd[:, 3:, :] - np.matmul(_batch_skew(cdot), J[:, :3, :]) \
                - np.matmul(cs, Jd[:, :3, :])
            w = (m / mtot)[:, None, None]
            Jcom = (w * Jlin).sum(axis=0)
            Jdcom = (w * Jdlin).sum(axis=0)
            self._com_cache = (com, Jcom, Jdcom)
        return self._com_cache

    @property
    def com(self) -> np.ndarray:
        return self._com()[0]

    @property
    def com_jacobian(self) -> np.ndarray:
        return self._com()[1]

    @property
    def com_jacobian_dot(self) -> np.ndarray:
        return self._com()[2]

    @property
    def com_velocity(self) -> np.ndarray:
        return self.com_jacobian @ self.state.nu

    def com_drift(self) -> np.ndarray:
        return self.com_jacobian_dot @ self.state.nu

    # -- CoM-frame dynamics ---------------------------------------------------

    def com_dynamics(self) -> ComDynamics:
        model = self.model
        nv = model.nv
        nu = self.state.nu

        Jc = self.com_jacobian            # (3, nv), base-linear block is I3
        Jcd = self.com_jacobian_dot

        # Phi maps nu -> nu_p; closed-form inverse because Jc[:, :3] = I3
        A = Jc[:, 3:]
        T = np.eye(nv)
        T[0:3, 3:] = -A
        # Tdot = -T @ Phidot @ T; Phidot has only its top 3 rows (Jcd) nonzero
        # and T's top-left 3x3 block is I3, so T @ Phidot has rows (Jcd; 0).
        TP = np.zeros((nv, nv))
        TP[0:3] = Jcd
        Tdot = -(TP @ T)

        M = self.M
        C = self.C
        MT = M @ T
        M_c = T.T @ MT
        C_c = T.T @ (M @ Tdot + C @ T)

        mtot = model.total_mass
        w_g = np.concatenate([mtot * model.gravity, np.zeros(3)])
        gravity = np.zeros(nv)
        gravity[0:6] = -w_g

        nu_p = nu.copy()
        nu_p[0:3] = Jc @ nu

        return ComDynamics(M_c=M_c, C_c=C_c, w_g=w_g, gravity=gravity,
                           com=self.com, com_velocity=nu_p[0:3].copy(),
                           nu_p=nu_p, T=T, Tdot=Tdot)


class _ZeroCache:
    def __init__(self):
        self._z: dict[int, np.ndarray] = {}

    def get(self, n: int) -> np.ndarray:
        z = self._z.get(n)
        if z is None:
            z = np.zeros(n)
            self._z[n] = z
        return z


_ZERO_CACHE = _ZeroCache()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def mass_matrix(model: RobotModel, state: SystemState) -> np.ndarray:
    return Kinematics(model, state).M


def bias_forces(model: RobotModel, state: SystemState) -> np.ndarray:
    return Kinematics(model, state).bias


def gravity_vector(model: RobotModel, state: SystemState) -> np.ndarray:
    return Kinematics(model, state).gravity


def coriolis_matrix(model: RobotModel, state: SystemState) -> np.ndarray:
    return Kinematics(model, state).C


def frame_jacobian(model: RobotModel, state: SystemState, frame: str) -> np.ndarray:
    return Kinematics(model, state).frame_jacobian(frame)


def frame_acceleration_drift(model: RobotModel, state: SystemState, frame: str) -> np.ndarray:
    return Kinematics(model, state).frame_drift(frame)


def com_dynamics(model: RobotModel, state: SystemState) -> ComDynamics:
    return Kinematics(model, state).com_dynamics()


def inverse_dynamics(model: RobotModel, state: SystemState, nu_dot: np.ndarray,
                     gravity: bool = True,
                     external_wrenches: list[tuple[str, np.ndarray]] | None = None) -> np.ndarray:
    """Generalized force needed for nu_dot, minus applied external wrenches.

    External wrenches are (frame name, (force; torque)) pairs in world
    coordinates at the frame origin.
    """
    kin = Kinematics(model, state)
    body_forces = None
    if external_wrenches:
        body_forces = np.zeros((model.nb, 6))
        for name, w in external_wrenches:
            b, off = model.frame(name)
            pt = kin.p[b] + kin.R[b] @ off
            w = np.asarray(w, dtype=float)
            force = w[:3]
            torque = w[3:]
            body_forces[b, :3] += torque + np.cross(pt, force)
            body_forces[b, 3:] += force
    return kin.rnea(np.asarray(nu_dot, dtype=float), gravity=gravity, body_forces=body_forces)


def forward_dynamics(model: RobotModel, state: SystemState, tau: np.ndarray,
                     external_wrenches: list[tuple[str, np.ndarray]] | None = None,
                     locked_base: bool = False,
                     generalized_forces: np.ndarray | None = None) -> np.ndarray:
    """Solve M nu_dot = S tau + sum J^T f - h for nu_dot.

    With ``locked_base`` the base rows are dropped and nu_dot_base = 0
    (exact welded-base dynamics).  ``generalized_forces`` adds an already
    projected force vector (used by the plant for contact forces).
    """
    kin = Kinematics(model, state)
    rhs = -kin.bias
    rhs[6:] += np.asarray(tau, dtype=float)
    if external_wrenches:
        for name, w in external_wrenches:
            J = kin.frame_jacobian(name)
            rhs += J.T @ np.asarray(w, dtype=float)
    if generalized_forces is not None:
        rhs += generalized_forces
    M = kin.M
    if locked_base:
        nu_dot = np.zeros(model.nv)
        nu_dot[6:] = np.linalg.solve(M[6:, 6:], rhs[6:])
        return nu_dot
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as e:
        raise ModelError(f"singular mass matrix: {e}") from None


def integrate(state: SystemState, nu_dot: np.ndarray, dt: float,
              locked_base: bool = False) -> SystemState:
    """Semi-implicit Euler step with quaternion exponential for orientation."""
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    nu = state.nu + np.asarray(nu_dot, dtype=float) * dt
    if locked_base:
        nu[:6] = 0.0
    pos = state.pos + nu[0:3] * dt
    dq = quat_from_rotvec(nu[3:6] * dt)
    quat = quat_normalize(quat_mul(dq, state.quat))
    q = state.q + nu[6:] * dt
    return SystemState(quat, pos, q, nu)
