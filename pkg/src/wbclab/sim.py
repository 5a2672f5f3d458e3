"""Physics plant: everything the controllers do not know about.

The plant owns its own RobotModel (possibly with unmodeled masses merged
in), compliant ground contact at foot-sole corner points, joint friction,
time-windowed external wrenches, an optional crane suspension, and a
sensor pipeline with noise, delay, low-pass filtering, and per-leg force
bias.  The controller-side model is a separate immutable value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Kinematics, _batch_cross, integrate
from .model import RobotModel, SystemState
from .spatial import quat_from_rotvec, quat_mul, quat_to_rot, so3_log


class SimulationBlowup(RuntimeError):
    """Raised when the plant state stops being finite."""


@dataclass
class GroundModel:
    stiffness: float = 1e5              # N/m per contact (shared by its corner points)
    damping: float = 5e3                # N s/m per contact
    mu: float = 0.8
    regularization_velocity: float = 1e-3   # m/s, tangential Coulomb smoothing
    corner_offsets: tuple = ((0.10, 0.06), (0.10, -0.06), (-0.10, 0.06), (-0.10, -0.06))

    def __post_init__(self):
        if not (self.stiffness > 0 and self.damping > 0):
            raise ValueError("ground stiffness and damping must be > 0")
        if not self.regularization_velocity > 0:
            raise ValueError("regularization velocity must be > 0")


@dataclass
class ExternalWrench:
    frame: str
    wrench: np.ndarray                  # (force; torque), world, at frame origin
    t_start: float = 0.0
    t_end: float = np.inf


@dataclass
class AddedMass:
    link: str
    mass: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class DisturbanceSpec:
    joint_coulomb: np.ndarray | None = None      # N m, per joint
    joint_viscous: np.ndarray | None = None      # N m s/rad, per joint
    added_masses: list[AddedMass] = field(default_factory=list)
    external_wrenches: list[ExternalWrench] = field(default_factory=list)
    force_bias: dict[str, float] = field(default_factory=dict)   # frame -> N on f_z reading
    joint_friction_regularization: float = 0.02  # rad/s

    def __post_init__(self):
        if self.joint_coulomb is not None:
            self.joint_coulomb = np.asarray(self.joint_coulomb, dtype=float)
            if np.any(self.joint_coulomb < 0):
                raise ValueError("Coulomb friction magnitudes must be >= 0")
        if self.joint_viscous is not None:
            self.joint_viscous = np.asarray(self.joint_viscous, dtype=float)
            if np.any(self.joint_viscous < 0):
                raise ValueError("viscous friction magnitudes must be >= 0")


@dataclass
class SensorModel:
    noise_base_pos: float = 0.0
    noise_base_ori: float = 0.0
    noise_joint_pos: float = 0.0
    noise_base_lin_vel: float = 0.0
    noise_base_ang_vel: float = 0.0
    noise_joint_vel: float = 0.0
    noise_force: float = 0.0
    delay_ticks: int = 0
    velocity_filter: float = 1.0        # first-order coefficient; 1 = passthrough

    def __post_init__(self):
        if self.delay_ticks < 0:
            raise ValueError("delay must be >= 0")
        if not 0.0 <= self.velocity_filter <= 1.0:
            raise ValueError("velocity filter coefficient must be in [0, 1]")


@dataclass
class CraneSpec:
    anchor_pos: np.ndarray
    anchor_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    stiffness_lin: float = 2e4
    damping_lin: float = 2e3
    stiffness_ang: float = 2e3
    damping_ang: float = 2e2
    welded: bool = False


def attach_masses(model: RobotModel, added: list[AddedMass]) -> RobotModel:
    """New model with point masses merged into the named links."""
    if not added:
        return model
    doc = model.to_dict()
    by_name = {l["name"]: l for l in doc["links"]}
    for am in added:
        if am.link not in by_name:
            raise ValueError(f"unknown link '{am.link}'")
        entry = by_name[am.link]
        m0 = entry["mass"]
        c0 = np.asarray(entry["com"], dtype=float)
        I0 = np.asarray(entry["inertia"], dtype=float)
        p = np.asarray(am.offset, dtype=float)
        m1 = m0 + am.mass
        c1 = (m0 * c0 + am.mass * p) / m1
        def shift(I, m, d):
            return I + m * (float(d @ d) * np.eye(3) - np.outer(d, d))
        I1 = shift(I0, m0, c0 - c1) + shift(np.zeros((3, 3)), am.mass, p - c1)
        entry["mass"] = float(m1)
        entry["com"] = c1.tolist()
        entry["inertia"] = I1.tolist()
    from .model import model_from_dict
    return model_from_dict(doc)


@dataclass
class Measurement:
    state: SystemState
    contact_forces: dict[str, np.ndarray]    # frame -> (force; torque) reading
    tick: int
    time: float


class Plant:
    """Compliant-contact plant stepped at the physics rate.

    ``contact_frames`` are the sole frames touching the flat ground plane
    z = 0; each one contributes ``ground.corner_offsets`` penalty points.
    """

    def __init__(self, model: RobotModel, state: SystemState,
                 ground: GroundModel | None = None,
                 disturbances: DisturbanceSpec | None = None,
                 crane: CraneSpec | None = None,
                 contact_frames: tuple[str, ...] = ()):
        self.model = attach_masses(model, disturbances.added_masses) if disturbances else model
        self.state = state.copy()
        self.ground = ground or GroundModel()
        self.disturbances = disturbances or DisturbanceSpec()
        self.crane = crane
        self.contact_frames = tuple(contact_frames)
        self.time = 0.0
        self.grf: dict[str, np.ndarray] = {f: np.zeros(6) for f in self.contact_frames}
        self.max_tangential_ratio = 0.0      # max |f_t| / (mu f_n) observed
        self._corners = np.array([[cx, cy, 0.0] for cx, cy in self.ground.corner_offsets])

    # -- one physics substep -------------------------------------------------

    def step(self, tau: np.ndarray, dt: float) -> None:
        model = self.model
        kin = Kinematics(model, self.state)
        nb = model.nb
        body_forces = np.zeros((nb, 6))

        g = self.ground
        corners = self._corners
        for name in self.contact_frames:
            b, off = model.frame(name)
            R = kin.R[b]
            sole_p = kin.p[b] + R @ off
            pts = sole_p + corners @ R.T                      # (nc, 3)
            pens = -pts[:, 2]
            if np.all(pens <= 0.0):
                self.grf[name] = np.zeros(6)
                continue
            vb = kin.v[b]
            v_pts = vb[3:] + _batch_cross(vb[:3], pts)       # corner velocities
            k_pt = g.stiffness / len(g.corner_offsets)
            c_pt = g.damping / len(g.corner_offsets)
            fz = np.where(pens > 0.0, k_pt * pens - c_pt * v_pts[:, 2], 0.0)
            fz = np.maximum(fz, 0.0)
            vt = v_pts[:, :2]
            vt_norm = np.hypot(vt[:, 0], vt[:, 1])
            scale = g.mu * fz / np.maximum(vt_norm, g.regularization_velocity)
            f = np.empty_like(pts)
            f[:, 0] = -scale * vt[:, 0]
            f[:, 1] = -scale * vt[:, 1]
            f[:, 2] = fz
            loaded = fz > 0.0
            if np.any(loaded):
                ratio = np.hypot(f[loaded, 0], f[loaded, 1]) / (g.mu * fz[loaded])
                self.max_tangential_ratio = max(self.max_tangential_ratio, float(ratio.max()))
            body_forces[b, :3] += _batch_cross(pts, f).sum(axis=0)
            body_forces[b, 3:] += f.sum(axis=0)
            wrench = np.empty(6)
            wrench[:3] = f.sum(axis=0)
            wrench[3:] = _batch_cross(pts - sole_p, f).sum(axis=0)
            self.grf[name] = wrench

        for ew in self.disturbances.external_wrenches:
            if ew.t_start <= self.time < ew.t_end:
                b, off = model.frame(ew.frame)
                pt = kin.p[b] + kin.R[b] @ off
                w = np.asarray(ew.wrench, dtype=float)
                body_forces[b, :3] += w[3:] + np.cross(pt, w[:3])
                body_forces[b, 3:] += w[:3]

        welded = self.crane is not None and self.crane.welded
        if self.crane is not None and not welded:
            c = self.crane
            f = c.stiffness_lin * (c.anchor_pos - self.state.pos) - c.damping_lin * self.state.nu[0:3]
            rot_err = so3_log(quat_to_rot(c.anchor_quat) @ kin.R[0].T)
            t = c.stiffness_ang * rot_err - c.damping_ang * self.state.nu[3:6]
            body_forces[0, :3] += t + np.cross(self.state.pos, f)
            body_forces[0, 3:] += f

        tau_eff = np.asarray(tau, dtype=float).copy()
        d = self.disturbances
        dq = self.state.nu[6:]
        if d.joint_coulomb is not None:
            sat = np.clip(dq / d.joint_friction_regularization, -1.0, 1.0)
            tau_eff -= d.joint_coulomb * sat
        if d.joint_viscous is not None:
            tau_eff -= d.joint_viscous * dq

        # project applied body forces onto generalized coordinates
        fC = body_forces
        for b in range(nb - 1, 0, -1):
            fC[model.body_parent[b]] += fC[b]
        Q = np.empty(model.nv)
        # body_forces rows are (force; torque-free aggregated as (moment; force))
        # already stored as spatial (moment-about-origin; force) pairs:
        S = kin.S
        Q[0:6] = S[0:6] @ fC[0]
        for b in range(1, nb):
            k = model.body_joint[b]
            Q[6 + k] = S[6 + k] @ fC[b]

        rhs = -kin.bias
        rhs[6:] += tau_eff
        rhs += Q
        if welded:
            nu_dot = np.zeros(model.nv)
            nu_dot[6:] = np.linalg.solve(kin.M[6:, 6:], rhs[6:])
        else:
            nu_dot = np.linalg.solve(kin.M, rhs)

        self.state = integrate(self.state, nu_dot, dt, locked_base=welded)
        self.time += dt
        if not (np.all(np.isfinite(self.state.nu)) and np.all(np.isfinite(self.state.pos))
                and np.all(np.isfinite(self.state.q))):
            raise SimulationBlowup(
                f"non-finite plant state at t = {self.time:.6f} s "
                f"(|nu|max = {np.max(np.abs(self.state.nu)):.3e})")


class SensorPipeline:
    """Noise, delay, filtering, and force bias between plant and controller."""

    def __init__(self, sensors: SensorModel, disturbances: DisturbanceSpec, seed: int = 0):
        self.sensors = sensors
        self.bias = dict(disturbances.force_bias)
        self.rng = np.random.default_rng(seed)
        self._buffer: list[tuple[SystemState, dict[str, np.ndarray]]] = []
        self._vel_filtered: np.ndarray | None = None

    def measure(self, plant: Plant, tick: int) -> Measurement:
        s = self.sensors
        self._buffer.append((plant.state.copy(), {k: v.copy() for k, v in plant.grf.items()}))
        idx = max(0, len(self._buffer) - 1 - s.delay_ticks)
        state, forces = self._buffer[idx]
        if len(self._buffer) > s.delay_ticks + 1:
            self._buffer.pop(0)

        rng = self.rng
        quat, pos, q, nu = state.quat, state.pos, state.q, state.nu.copy()
        if s.noise_base_pos > 0:
            pos = pos + rng.normal(0.0, s.noise_base_pos, 3)
        if s.noise_base_ori > 0:
            quat = quat_mul(quat_from_rotvec(rng.normal(0.0, s.noise_base_ori, 3)), quat)
        if s.noise_joint_pos > 0:
            q = q + rng.normal(0.0, s.noise_joint_pos, q.shape[0])
        if s.noise_base_lin_vel > 0:
            nu[0:3] += rng.normal(0.0, s.noise_base_lin_vel, 3)
        if s.noise_base_ang_vel > 0:
            nu[3:6] += rng.normal(0.0, s.noise_base_ang_vel, 3)
        if s.noise_joint_vel > 0:
            nu[6:] += rng.normal(0.0, s.noise_joint_vel, nu.shape[0] - 6)

        if s.velocity_filter < 1.0:
            if self._vel_filtered is None:
                self._vel_filtered = nu.copy()
            else:
                self._vel_filtered = self._vel_filtered + s.velocity_filter * (nu - self._vel_filtered)
            nu = self._vel_filtered.copy()

        out_forces = {}
        for name, w in forces.items():
            w = w.copy()
            if s.noise_force > 0:
                w[:3] += rng.normal(0.0, s.noise_force, 3)
            if name in self.bias:
                w[2] += self.bias[name]
            out_forces[name] = w

        meas_state = SystemState(quat / np.linalg.norm(quat), pos, q, nu)
        return Measurement(meas_state, out_forces, tick, plant.time)
