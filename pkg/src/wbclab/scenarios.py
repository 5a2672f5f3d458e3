"""The four experiments as reproducible scripts.

Scenario kinds:

* ``squat``      - double-support CoM-height sinusoid (disturbed squat is
                   the same kind plus a disturbance block)
* ``foot_swing`` - foot position/orientation tracking while hung from the
                   welded crane
* ``jump``       - sixth-order push and landing polynomials with the
                   stance-jump -> flight -> landing -> settled machine
* ``onedof_step``- 1-DoF plant, step reference, constant disturbance
                   (used by the closed-form error-law experiments)

``run_scenario`` executes the control loop at the configured rate against
the physics plant (10 substeps per tick by default) and returns a
ScenarioLog; identical configs and seeds give byte-identical CSV output.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from . import prefabs
from .dynamics import Kinematics
from .id_wbc import ContactSet, IdWbc, TaskSpec
from .model import ModelError, RobotModel, SystemState, load_model
from .pb_wbc import ImpedanceTask, PbTaskStack, PbWbc
from .sim import (AddedMass, CraneSpec, DisturbanceSpec, ExternalWrench, GroundModel,
                  Plant, SensorModel, SensorPipeline, SimulationBlowup)
from .spatial import so3_log
from .trajectories import fit_sixth_order, sinusoid

SCHEMA_VERSION = "wbclog-1"
QP_STATUS_CODES = {"optimal": 0, "max-iterations": 1, "primal-infeasible": 2}
PHASE_CODES = {"stance": 0, "stance-jump": 1, "flight": 2, "landing": 3,
               "settled": 4, "hanging": 5}


class ConfigError(ValueError):
    """Raised for malformed scenario configuration documents."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "kind": "squat",
    "name": None,
    "controller": "id",
    "duration_s": 7.5,
    "settle_s": 0.5,
    "seed": 0,
    "control_hz": 1000,
    "physics_substeps": 10,
    "model": "biped",
    "model_params": {"mass": 41.0},
    "trajectory": {
        "amplitude_pp_m": 0.20,
        "frequency_hz": 0.4,
        "apex_m": 0.13,
        "liftoff_rise_m": 0.12,
        "push_duration_s": 0.5,
        "landing_duration_s": 0.5,
        "forward_shift_m": 0.02,
        "flight_retract_m": 0.02,
        "polynomial": "min-jerk",
        "step_m": 0.05,
        "height_threshold_m": 0.005,
        "force_eps_n": 20.0,
        "foot_height_eps_m": 0.01,
        "hysteresis_n": 5.0,
    },
    "gains": {
        "id": {
            "com_kp": 150.0, "com_kd": None,
            "ori_kp": 100.0, "ori_kd": None,
            "foot_pos_kp": 4000.0, "foot_pos_kd": None,
            "foot_ori_kp": 21000.0, "foot_ori_kd": None,
            "weight_com": 1.0, "weight_ori": 1.0, "weight_foot": 1.0,
        },
        "pb": {
            "com_kp": 6150.0, "com_kd": None,
            "ori_kp": 550.0, "ori_kd": None,
            "foot_pos_kp": 1500.0, "foot_pos_kd": None,
            "foot_ori_kp": 200.0, "foot_ori_kd": None,
            "q_c": 1.0, "q_f": 1e-5,
            "d_pbc": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            "condition_bound": 1e6,
        },
    },
    "ground": {
        "stiffness": 1e5, "damping": 5e3, "mu": 0.8,
        "regularization_velocity": 1e-3,
        "corner_half_x": 0.10, "corner_half_y": 0.06,
        "cop_margin": 0.8,
    },
    "disturbances": {
        "joint_coulomb": 0.0,
        "joint_viscous": 0.0,
        "added_masses": [],
        "external_wrenches": [],
        "force_bias": {},
    },
    "sensors": {
        "noise_base_pos": 0.0, "noise_base_ori": 0.0, "noise_joint_pos": 0.0,
        "noise_base_lin_vel": 0.0, "noise_base_ang_vel": 0.0, "noise_joint_vel": 0.0,
        "noise_force": 0.0, "delay_ticks": 0, "velocity_filter": 1.0,
    },
    "crane": {"welded": True, "height": 1.2},
    "contact_mu": 0.7,
    "contact_velocity_damping": 30.0,
    "torque_limit_scale": 1.0,
    "output": None,
}

KINDS = ("squat", "foot_swing", "jump", "onedof_step")


def _merge_strict(defaults, override, path="config"):
    if not isinstance(override, dict):
        raise ConfigError(f"{path}: expected an object")
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        if key not in defaults:
            raise ConfigError(f"{path}: unknown key '{key}'")
        if isinstance(defaults[key], dict) and key not in ("force_bias", "model_params"):
            out[key] = _merge_strict(defaults[key], val, f"{path}.{key}")
        else:
            out[key] = copy.deepcopy(val)
    return out


def make_config(overrides: dict | None = None) -> dict:
    """Fully resolved scenario configuration (defaults + strict overrides)."""
    cfg = _merge_strict(_DEFAULTS, overrides or {})
    if cfg["kind"] not in KINDS:
        raise ConfigError(f"unknown scenario kind '{cfg['kind']}'")
    if cfg["controller"] not in ("id", "pb"):
        raise ConfigError(f"unknown controller '{cfg['controller']}'")
    if not cfg["duration_s"] > 0:
        raise ConfigError("duration_s must be > 0")
    if cfg["kind"] in ("squat", "foot_swing") and not cfg["trajectory"]["frequency_hz"] > 0:
        raise ConfigError("frequency_hz must be > 0")
    if cfg["name"] is None:
        cfg["name"] = f"{cfg['kind']}_{cfg['controller']}"
    return cfg


def load_config(path: str) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        return make_config(doc)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def _critical(kp):
    return 2.0 * np.sqrt(kp)


def _gain(block, name):
    """ID gains: a None kd defaults to critical damping 2 sqrt(kp)."""
    v = block[name]
    if v is None and name.endswith("_kd"):
        return _critical(block[name[:-3] + "_kp"])
    return v


def _pb_gain(pb, idg, name):
    """PB gains: a None kd is translated from the ID gain by the task
    stiffness ratio (kd_pb = kp_pb / kp_id * kd_id), i.e. the inertia
    scaling rule; this keeps the damping ratio of the ID tuning."""
    v = pb[name]
    if v is not None:
        return v
    if name.endswith("_kd"):
        base = name[:-3]
        return pb[base + "_kp"] / idg[base + "_kp"] * _gain(idg, base + "_kd")
    return v


# ---------------------------------------------------------------------------
# jump phase machine
# ---------------------------------------------------------------------------

@dataclass
class JumpPhaseMachine:
    """stance-jump -> flight -> landing -> settled, with hysteresis.

    Liftoff: CoM above a threshold height with positive vertical velocity
    and vanishing leg forces.  Touchdown: negative CoM velocity, feet at
    ground height, leg forces present again.
    """

    standing_com_z: float
    height_threshold: float = 0.005
    force_eps: float = 5.0
    foot_height_eps: float = 0.002
    hysteresis: float = 2.0
    landing_duration: float = 0.5
    phase: str = "stance-jump"
    touchdown_time: float | None = None

    def update(self, t: float, com_z: float, com_vz: float,
               feet_heights: np.ndarray, leg_forces: np.ndarray) -> str:
        if self.phase == "stance-jump":
            if (com_z > self.standing_com_z + self.height_threshold
                    and com_vz > 0.0
                    and float(np.max(leg_forces, initial=0.0)) < self.force_eps):
                self.phase = "flight"
        elif self.phase == "flight":
            feet_high = float(np.max(feet_heights)) if feet_heights.size else 0.0
            if (com_vz < 0.0
                    and feet_high < self.foot_height_eps
                    and float(np.sum(leg_forces)) > self.force_eps + self.hysteresis):
                self.phase = "landing"
                self.touchdown_time = t
        elif self.phase == "landing":
            if self.touchdown_time is not None and t - self.touchdown_time >= self.landing_duration:
                self.phase = "settled"
        return self.phase


# ---------------------------------------------------------------------------
# scenario log
# ---------------------------------------------------------------------------

@dataclass
class ScenarioLog:
    columns: dict[str, list] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    aborted: bool = False
    abort_reason: str = ""

    def append(self, row: dict):
        for key, val in row.items():
            self.columns.setdefault(key, []).append(val)

    def finalize(self):
        self.columns = {k: np.asarray(v) for k, v in self.columns.items()}
        return self

    def __len__(self):
        first = next(iter(self.columns.values()), [])
        return len(first)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    def to_csv(self, path: str):
        names = list(self.columns)
        cols = [self.columns[k] for k in names]
        with open(path, "w") as fh:
            fh.write(f"# {SCHEMA_VERSION}\n")
            fh.write(",".join(names) + "\n")
            for i in range(len(self)):
                fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")
            if self.aborted:
                fh.write(f"# aborted: {self.abort_reason}\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# model / controller construction
# ---------------------------------------------------------------------------

def _resolve_model(cfg) -> RobotModel:
    name = cfg["model"]
    if name == "biped":
        return prefabs.default_biped()
    if name == "onedof":
        return prefabs.one_dof_slider(mass=float(cfg["model_params"].get("mass", 41.0)))
    return load_model(name)


def _build_id_controller(cfg, model, kind, welded):
    g = cfg["gains"]["id"]
    tasks = []
    if kind in ("squat", "jump"):
        tasks.append(TaskSpec("com", "com", kp=g["com_kp"], kd=_gain(g, "com_kd"),
                              weight=g["weight_com"]))
        tasks.append(TaskSpec("torso", "torso_frame", kp=g["ori_kp"], kd=_gain(g, "ori_kd"),
                              weight=g["weight_ori"],
                              mask=np.array([0, 0, 0, 1, 1, 1], dtype=bool)))
        contacts = ContactSet(("left_sole", "right_sole"), mu=cfg["contact_mu"], cop_box=_cop_box(cfg),
                              velocity_damping=cfg["contact_velocity_damping"])
    elif kind == "foot_swing":
        kp6 = np.array([g["foot_pos_kp"]] * 3 + [g["foot_ori_kp"]] * 3)
        kd6 = np.array([_gain(g, "foot_pos_kd")] * 3 + [_gain(g, "foot_ori_kd")] * 3)
        for side in ("left", "right"):
            tasks.append(TaskSpec(f"{side}_foot", f"{side}_sole", kp=kp6, kd=kd6,
                                  weight=g["weight_foot"]))
        contacts = ContactSet((), mu=cfg["contact_mu"])
    else:  # onedof_step
        tasks.append(TaskSpec("slider", "slider_tip", kp=g["com_kp"], kd=_gain(g, "com_kd"),
                              weight=1.0, mask=np.array([1, 0, 0, 0, 0, 0], dtype=bool)))
        contacts = ContactSet((), mu=cfg["contact_mu"])
    limits = model.torque_limit * cfg["torque_limit_scale"]
    return IdWbc(model, tasks, contacts, welded_base=welded, torque_limits=limits)


def _foot_impedance_tasks(cfg):
    g = cfg["gains"]["pb"]
    idg = cfg["gains"]["id"]
    kp6 = np.array([g["foot_pos_kp"]] * 3 + [g["foot_ori_kp"]] * 3)
    kd6 = np.array([_pb_gain(g, idg, "foot_pos_kd")] * 3
                   + [_pb_gain(g, idg, "foot_ori_kd")] * 3)
    return [ImpedanceTask(f"{side}_sole", kp=kp6, kd=kd6) for side in ("left", "right")]


def _build_pb_controller(cfg, model, kind, welded):
    g = cfg["gains"]["pb"]
    idg = cfg["gains"]["id"]
    com_kp = np.array([g["com_kp"]] * 3 + [g["ori_kp"]] * 3)
    com_kd = np.array([_pb_gain(g, idg, "com_kd")] * 3 + [_pb_gain(g, idg, "ori_kd")] * 3)
    if kind in ("squat", "jump"):
        d = np.asarray(g["d_pbc"], dtype=float)
        stack = PbTaskStack(com_kp=com_kp, com_kd=com_kd,
                            contact_frames=("left_sole", "right_sole"),
                            Q_c=g["q_c"], Q_f=g["q_f"],
                            d_pbc={"left_sole": d, "right_sole": d},
                            condition_bound=g["condition_bound"])
    elif kind == "foot_swing":
        stack = PbTaskStack(com_kp=com_kp, com_kd=com_kd, contact_frames=(),
                            impedance=_foot_impedance_tasks(cfg),
                            condition_bound=g["condition_bound"])
    else:  # onedof_step
        task = ImpedanceTask("slider_tip", kp=g["com_kp"], kd=_pb_gain(g, idg, "com_kd"),
                             mask=np.array([1, 0, 0, 0, 0, 0], dtype=bool))
        stack = PbTaskStack(com_kp=com_kp, com_kd=com_kd, contact_frames=(),
                            impedance=[task], condition_bound=g["condition_bound"])
    return PbWbc(model, stack, mu=cfg["contact_mu"], welded_base=welded,
                 cop_box=_cop_box(cfg))


def _build_disturbances(cfg, model) -> DisturbanceSpec:
    d = cfg["disturbances"]
    coulomb = d["joint_coulomb"]
    viscous = d["joint_viscous"]
    coulomb = np.broadcast_to(np.asarray(coulomb, dtype=float), (model.n,)).copy() \
        if np.any(np.asarray(coulomb, dtype=float) != 0) else None
    viscous = np.broadcast_to(np.asarray(viscous, dtype=float), (model.n,)).copy() \
        if np.any(np.asarray(viscous, dtype=float) != 0) else None
    added = [AddedMass(a["link"], float(a["mass"]), np.asarray(a.get("offset", [0, 0, 0]), dtype=float))
             for a in d["added_masses"]]
    wrenches = [ExternalWrench(w["frame"], np.asarray(w["wrench"], dtype=float),
                               float(w.get("t_start", 0.0)),
                               float(w.get("t_end", np.inf)))
                for w in d["external_wrenches"]]
    return DisturbanceSpec(joint_coulomb=coulomb, joint_viscous=viscous,
                           added_masses=added, external_wrenches=wrenches,
                           force_bias=dict(d["force_bias"]))


def _build_ground(cfg) -> GroundModel:
    g = cfg["ground"]
    hx, hy = g["corner_half_x"], g["corner_half_y"]
    return GroundModel(stiffness=g["stiffness"], damping=g["damping"], mu=g["mu"],
                       regularization_velocity=g["regularization_velocity"],
                       corner_offsets=((hx, hy), (hx, -hy), (-hx, hy), (-hx, -hy)))


def _cop_box(cfg):
    g = cfg["ground"]
    m = g["cop_margin"]
    return (m * g["corner_half_x"], m * g["corner_half_y"])


def _build_sensors(cfg) -> SensorModel:
    s = cfg["sensors"]
    return SensorModel(**s)


# ---------------------------------------------------------------------------
# scenario runner
# ---------------------------------------------------------------------------

def run_scenario(config: dict) -> ScenarioLog:
    cfg = make_config(config)
    kind = cfg["kind"]
    runner = {
        "squat": _run_squat,
        "foot_swing": _run_foot_swing,
        "jump": _run_jump,
        "onedof_step": _run_onedof,
    }[kind]
    return runner(cfg)


def _measured_kin(model, meas):
    return Kinematics(model, meas.state)


def _qp_cols(out):
    code = QP_STATUS_CODES.get(out.status, 1)
    if out.fallback:
        code = max(code, 1)
    return {"qp_status": code, "qp_iters": out.iterations}


def _grf_cols(meas_forces, sol_forces, frames):
    row = {}
    for label, source in (("meas", meas_forces), ("sol", sol_forces)):
        for f in frames:
            short = f.split("_")[0]
            w = source.get(f, np.zeros(6))
            for i, comp in enumerate(("fx", "fy", "fz", "tx", "ty", "tz")):
                row[f"grf_{label}_{short}_{comp}"] = w[i]
    return row


def _tau_cols(tau, n):
    return {f"tau_{i + 1:02d}": tau[i] for i in range(n)}


def _run_squat(cfg) -> ScenarioLog:
    model = _resolve_model(cfg)
    state0 = prefabs.standing_state(model)
    ground = _build_ground(cfg)
    dist = _build_disturbances(cfg, model)
    plant = Plant(model, state0, ground, dist,
                  contact_frames=("left_sole", "right_sole"))
    pipeline = SensorPipeline(_build_sensors(cfg), dist, seed=cfg["seed"])

    welded = False
    if cfg["controller"] == "id":
        ctrl = _build_id_controller(cfg, model, "squat", welded)
    else:
        ctrl = _build_pb_controller(cfg, model, "squat", welded)

    dt_tick = 1.0 / cfg["control_hz"]
    subs = cfg["physics_substeps"]
    dt_phys = dt_tick / subs
    n_settle = int(round(cfg["settle_s"] / dt_tick))
    n_main = int(round(cfg["duration_s"] / dt_tick))

    log = ScenarioLog(meta={
        "schema": SCHEMA_VERSION, "kind": "squat", "controller": cfg["controller"],
        "n": model.n, "config": cfg,
        "period_s": 1.0 / cfg["trajectory"]["frequency_hz"],
        "tracked": [("ref_com_z", "meas_com_z")],
    })

    kin0 = Kinematics(model, state0)
    com_ref = kin0.com.copy()
    amp = cfg["trajectory"]["amplitude_pp_m"]
    freq = cfg["trajectory"]["frequency_hz"]

    def set_refs(ctrl, pos, vel_z, acc_z):
        vel = np.array([0.0, 0.0, vel_z, 0.0, 0.0, 0.0])
        acc = np.array([0.0, 0.0, acc_z, 0.0, 0.0, 0.0])
        if cfg["controller"] == "id":
            ctrl.tasks["com"].set_reference(pos=pos, vel=vel, acc=acc)
            ctrl.tasks["torso"].set_reference(rot=np.eye(3))
        else:
            ctrl.stack.set_com_reference(pos=pos, vel=vel, acc=acc)

    try:
        # settle onto the compliant ground, references at the initial pose
        set_refs(ctrl, com_ref, 0.0, 0.0)
        for _ in range(n_settle):
            meas = pipeline.measure(plant, 0)
            out = ctrl.control_tick(meas.state) if cfg["controller"] == "id" \
                else ctrl.control_tick(meas.state, phase="stance")
            for _ in range(subs):
                plant.step(out.tau, dt_phys)
        # the sinusoid is centered on the settled CoM height
        meas = pipeline.measure(plant, 0)
        z0 = Kinematics(model, meas.state).com[2]
        base_ref = np.array([com_ref[0], com_ref[1], z0])
        log.meta["z0"] = float(z0)

        for tick in range(n_main):
            t = tick * dt_tick
            z, vz, az = sinusoid(amp, freq, t, offset=z0)
            pos = np.array([base_ref[0], base_ref[1], z])
            set_refs(ctrl, pos, vz, az)
            meas = pipeline.measure(plant, tick)
            out = ctrl.control_tick(meas.state) if cfg["controller"] == "id" \
                else ctrl.control_tick(meas.state, phase="stance")
            for _ in range(subs):
                plant.step(out.tau, dt_phys)
            mk = _measured_kin(model, meas)
            com = mk.com
            row = {"t": t, "phase": PHASE_CODES["stance"],
                   "ref_com_x": pos[0], "ref_com_y": pos[1], "ref_com_z": pos[2],
                   "ref_com_vz": vz, "ref_com_az": az,
                   "meas_com_x": com[0], "meas_com_y": com[1], "meas_com_z": com[2],
                   "meas_com_vz": mk.com_velocity[2]}
            ori = so3_log(mk.R[0])
            row.update({"meas_ori_x": ori[0], "meas_ori_y": ori[1], "meas_ori_z": ori[2]})
            row.update(_tau_cols(out.tau, model.n))
            row.update(_grf_cols(meas.contact_forces, out.contact_forces,
                                 ("left_sole", "right_sole")))
            row.update(_qp_cols(out))
            log.append(row)
    except SimulationBlowup as e:
        log.aborted = True
        log.abort_reason = str(e)
    return log.finalize()


def _run_foot_swing(cfg) -> ScenarioLog:
    model = _resolve_model(cfg)
    state0 = prefabs.hanging_state(model, base_height=cfg["crane"]["height"])
    ground = _build_ground(cfg)
    dist = _build_disturbances(cfg, model)
    crane = CraneSpec(anchor_pos=state0.pos.copy(), welded=bool(cfg["crane"]["welded"]))
    plant = Plant(model, state0, ground, dist, crane=crane, contact_frames=())
    pipeline = SensorPipeline(_build_sensors(cfg), dist, seed=cfg["seed"])

    welded = crane.welded
    if cfg["controller"] == "id":
        ctrl = _build_id_controller(cfg, model, "foot_swing", welded)
    else:
        ctrl = _build_pb_controller(cfg, model, "foot_swing", welded)

    dt_tick = 1.0 / cfg["control_hz"]
    subs = cfg["physics_substeps"]
    dt_phys = dt_tick / subs
    n_main = int(round(cfg["duration_s"] / dt_tick))
    amp = cfg["trajectory"]["amplitude_pp_m"]
    freq = cfg["trajectory"]["frequency_hz"]

    kin0 = Kinematics(model, state0)
    foot0 = {s: kin0.frame_position(f"{s}_sole").copy() for s in ("left", "right")}

    log = ScenarioLog(meta={
        "schema": SCHEMA_VERSION, "kind": "foot_swing", "controller": cfg["controller"],
        "n": model.n, "config": cfg, "period_s": 1.0 / freq,
        "tracked": [("ref_left_x", "meas_left_x"), ("ref_right_x", "meas_right_x")],
    })

    try:
        for tick in range(n_main):
            t = tick * dt_tick
            dx, dvx, dax = sinusoid(amp, freq, t)
            refs = {}
            for side in ("left", "right"):
                pos = foot0[side] + np.array([dx, 0.0, 0.0])
                vel = np.array([dvx, 0, 0, 0, 0, 0.0])
                acc = np.array([dax, 0, 0, 0, 0, 0.0])
                refs[side] = pos
                if cfg["controller"] == "id":
                    ctrl.tasks[f"{side}_foot"].set_reference(pos=pos, rot=np.eye(3),
                                                             vel=vel, acc=acc)
                else:
                    task = next(it for it in ctrl.stack.impedance
                                if it.frame == f"{side}_sole")
                    task.set_reference(pos=pos, rot=np.eye(3), vel=vel, acc=acc)
            meas = pipeline.measure(plant, tick)
            out = ctrl.control_tick(meas.state) if cfg["controller"] == "id" \
                else ctrl.control_tick(meas.state, phase="flight")
            for _ in range(subs):
                plant.step(out.tau, dt_phys)
            mk = _measured_kin(model, meas)
            row = {"t": t, "phase": PHASE_CODES["hanging"]}
            for side in ("left", "right"):
                p = mk.frame_position(f"{side}_sole")
                o = so3_log(mk.frame_rotation(f"{side}_sole"))
                r = refs[side]
                row.update({f"ref_{side}_x": r[0], f"ref_{side}_y": r[1], f"ref_{side}_z": r[2],
                            f"meas_{side}_x": p[0], f"meas_{side}_y": p[1], f"meas_{side}_z": p[2],
                            f"meas_{side}_ox": o[0], f"meas_{side}_oy": o[1], f"meas_{side}_oz": o[2]})
            row.update(_tau_cols(out.tau, model.n))
            row.update(_qp_cols(out))
            log.append(row)
    except SimulationBlowup as e:
        log.aborted = True
        log.abort_reason = str(e)
    return log.finalize()


def _run_onedof(cfg) -> ScenarioLog:
    if cfg["model"] in ("biped", "onedof"):
        model = prefabs.one_dof_slider(mass=float(cfg["model_params"].get("mass", 41.0)))
    else:
        model = load_model(cfg["model"])
    state0 = SystemState.neutral(model)
    dist = _build_disturbances(cfg, model)
    crane = CraneSpec(anchor_pos=np.zeros(3), welded=True)
    plant = Plant(model, state0, _build_ground(cfg), dist, crane=crane, contact_frames=())
    pipeline = SensorPipeline(_build_sensors(cfg), dist, seed=cfg["seed"])

    if cfg["controller"] == "id":
        ctrl = _build_id_controller(cfg, model, "onedof_step", welded=True)
    else:
        ctrl = _build_pb_controller(cfg, model, "onedof_step", welded=True)

    dt_tick = 1.0 / cfg["control_hz"]
    subs = cfg["physics_substeps"]
    dt_phys = dt_tick / subs
    n_main = int(round(cfg["duration_s"] / dt_tick))
    step = cfg["trajectory"]["step_m"]

    log = ScenarioLog(meta={
        "schema": SCHEMA_VERSION, "kind": "onedof_step", "controller": cfg["controller"],
        "n": model.n, "config": cfg, "period_s": cfg["duration_s"],
        "tracked": [("ref_x", "meas_x")],
    })
    ref = np.array([step, 0.0, 0.0])
    try:
        for tick in range(n_main):
            t = tick * dt_tick
            if cfg["controller"] == "id":
                ctrl.tasks["slider"].set_reference(pos=ref)
            else:
                ctrl.stack.impedance[0].set_reference(pos=ref)
            meas = pipeline.measure(plant, tick)
            out = ctrl.control_tick(meas.state) if cfg["controller"] == "id" \
                else ctrl.control_tick(meas.state, phase="flight")
            for _ in range(subs):
                plant.step(out.tau, dt_phys)
            mk = _measured_kin(model, meas)
            p = mk.frame_position("slider_tip")
            v = mk.frame_velocity("slider_tip")
            row = {"t": t, "phase": PHASE_CODES["hanging"],
                   "ref_x": ref[0], "meas_x": p[0], "meas_vx": v[0]}
            row.update(_tau_cols(out.tau, model.n))
            row.update(_qp_cols(out))
            log.append(row)
    except SimulationBlowup as e:
        log.aborted = True
        log.abort_reason = str(e)
    return log.finalize()


def _run_jump(cfg) -> ScenarioLog:
    model = _resolve_model(cfg)
    state0 = prefabs.standing_state(model)
    ground = _build_ground(cfg)
    dist = _build_disturbances(cfg, model)
    plant = Plant(model, state0, ground, dist,
                  contact_frames=("left_sole", "right_sole"))
    pipeline = SensorPipeline(_build_sensors(cfg), dist, seed=cfg["seed"])

    tr = cfg["trajectory"]
    dt_tick = 1.0 / cfg["control_hz"]
    subs = cfg["physics_substeps"]
    dt_phys = dt_tick / subs
    n_settle = int(round(cfg["settle_s"] / dt_tick))
    n_main = int(round(cfg["duration_s"] / dt_tick))
    g_mag = abs(model.gravity[2])

    if cfg["controller"] == "id":
        ctrl = _build_id_controller(cfg, model, "jump", welded=False)
    else:
        ctrl = _build_pb_controller(cfg, model, "jump", welded=False)

    log = ScenarioLog(meta={
        "schema": SCHEMA_VERSION, "kind": "jump", "controller": cfg["controller"],
        "n": model.n, "config": cfg, "period_s": cfg["duration_s"],
        "tracked": [("ref_com_z", "meas_com_z")],
    })

    def set_com_refs(pos, vel, acc):
        if cfg["controller"] == "id":
            if "com" in ctrl.tasks:
                ctrl.tasks["com"].set_reference(pos=pos, vel=vel, acc=acc)
            ctrl.tasks["torso"].set_reference(rot=np.eye(3))
        else:
            ctrl.stack.set_com_reference(pos=pos, vel=vel, acc=acc)

    try:
        kin0 = Kinematics(model, state0)
        com_hold = kin0.com.copy()
        set_com_refs(com_hold, np.zeros(6), np.zeros(6))
        for _ in range(n_settle):
            meas = pipeline.measure(plant, 0)
            out = ctrl.control_tick(meas.state) if cfg["controller"] == "id" \
                else ctrl.control_tick(meas.state, phase="stance")
            for _ in range(subs):
                plant.step(out.tau, dt_phys)
        meas = pipeline.measure(plant, 0)
        mk0 = Kinematics(model, meas.state)
        z0 = mk0.com[2]
        x0, y0 = mk0.com[0], mk0.com[1]
        log.meta["z0"] = float(z0)
        # flight-phase foot references are body-relative: the standing
        # posture under the torso, slightly retracted so the feet clear the
        # ground on the way up and meet it as the body comes back down
        retract = np.array([0.0, 0.0, tr["flight_retract_m"]])
        base_pos_stand = meas.state.pos.copy()
        foot_pose_stand = {side: (mk0.frame_position(f"{side}_sole") + retract,
                                  mk0.frame_rotation(f"{side}_sole").copy())
                           for side in ("left", "right")}

        def update_flight_foot_refs(meas_state):
            shift = meas_state.pos - base_pos_stand
            for side in ("left", "right"):
                pos = foot_pose_stand[side][0] + shift
                if cfg["controller"] == "id":
                    ctrl.tasks[f"{side}_foot"].set_reference(pos=pos)
                else:
                    for task in ctrl.stack.impedance:
                        if task.frame == f"{side}_sole":
                            task.set_reference(pos=pos)

        rise = tr["liftoff_rise_m"]
        apex = tr["apex_m"]
        if apex > rise:
            v_lo = float(np.sqrt(2.0 * g_mag * (apex - rise)))
            z_end, a_end = z0 + rise, -g_mag
        else:
            # apex not above the extension: never leaves the ground
            v_lo, z_end, a_end = 0.0, z0 + max(apex, 0.0), 0.0
        poly_kind = tr["polynomial"]
        push_T = tr["push_duration_s"]
        z_push = fit_sixth_order(z0, 0.0, 0.0, z_end, v_lo, a_end, push_T, kind=poly_kind)
        x_push = fit_sixth_order(x0, 0.0, 0.0, x0 + tr["forward_shift_m"], 0.0, 0.0,
                                 push_T, kind=poly_kind)

        machine = JumpPhaseMachine(
            standing_com_z=z0,
            height_threshold=tr["height_threshold_m"],
            force_eps=tr["force_eps_n"],
            foot_height_eps=tr["foot_height_eps_m"],
            hysteresis=tr["hysteresis_n"],
            landing_duration=tr["landing_duration_s"])

        # flight ballistic command state, captured at liftoff
        lo = {"t": 0.0, "z": 0.0, "vz": 0.0, "x": 0.0, "vx": 0.0}
        landing = {"z": None, "x": None, "t": 0.0}
        prev_phase = "stance-jump"
        planned_forces = np.array([1e3, 1e3])

        for tick in range(n_main):
            t = tick * dt_tick
            phase = machine.phase
            # commanded trajectory per phase
            if phase == "stance-jump":
                if t <= push_T or v_lo == 0.0:
                    z, vz, az = z_push.evaluate(min(t, push_T))
                    x, vx, ax = x_push.evaluate(min(t, push_T))
                else:
                    # past the push: command continues ballistically until
                    # the liftoff trigger fires
                    ft = t - push_T
                    z = z_end + v_lo * ft - 0.5 * g_mag * ft * ft
                    vz = v_lo - g_mag * ft
                    az = -g_mag
                    x, vx, ax = x_push.evaluate(push_T)[0], 0.0, 0.0
            elif phase == "flight":
                ft = t - lo["t"]
                z = lo["z"] + lo["vz"] * ft - 0.5 * g_mag * ft * ft
                vz = lo["vz"] - g_mag * ft
                az = -g_mag
                x = lo["x"] + lo["vx"] * ft
                vx, ax = lo["vx"], 0.0
            elif phase == "landing":
                z, vz, az = landing["z"].evaluate(t - landing["t"])
                x, vx, ax = landing["x"].evaluate(t - landing["t"])
            else:  # settled
                z, vz, az = z0, 0.0, 0.0
                x = landing["x"].boundary[3] if landing["x"] is not None else x0
                vx, ax = 0.0, 0.0

            pos = np.array([x, y0, z])
            vel = np.array([vx, 0.0, vz, 0.0, 0.0, 0.0])
            acc = np.array([ax, 0.0, az, 0.0, 0.0, 0.0])
            set_com_refs(pos, vel, acc)

            meas = pipeline.measure(plant, tick)
            mk = Kinematics(model, meas.state)
            if phase == "flight":
                update_flight_foot_refs(meas.state)

            # the contact-velocity damping case covers the whole
            # post-touchdown stance, so "settled" keeps the landing law
            pb_phase = {"stance-jump": "jump", "flight": "flight",
                        "landing": "landing", "settled": "landing"}[phase]
            if cfg["controller"] == "id":
                out = ctrl.control_tick(meas.state)
            else:
                out = ctrl.control_tick(meas.state, phase=pb_phase)

            for _ in range(subs):
                plant.step(out.tau, dt_phys)

            com = mk.com
            row = {"t": t, "phase": PHASE_CODES[phase],
                   "ref_com_x": pos[0], "ref_com_y": pos[1], "ref_com_z": pos[2],
                   "ref_com_vz": vz, "ref_com_az": az,
                   "meas_com_x": com[0], "meas_com_y": com[1], "meas_com_z": com[2],
                   "meas_com_vz": mk.com_velocity[2]}
            ori = so3_log(mk.R[0])
            row.update({"meas_ori_x": ori[0], "meas_ori_y": ori[1], "meas_ori_z": ori[2]})
            fl = mk.frame_position("left_sole")[2]
            fr = mk.frame_position("right_sole")[2]
            row.update({"meas_foot_l_z": fl, "meas_foot_r_z": fr,
                        "meas_foot_l_vx": mk.frame_velocity("left_sole")[0],
                        "meas_foot_r_vx": mk.frame_velocity("right_sole")[0]})
            row.update(_tau_cols(out.tau, model.n))
            row.update(_grf_cols(meas.contact_forces, out.contact_forces,
                                 ("left_sole", "right_sole")))
            row.update(_qp_cols(out))
            log.append(row)

            # liftoff watches the controller's own force plan (the planned
            # GRFs go to zero with the ballistic command); touchdown watches
            # the measured readings (the flight controller plans no forces).
            # Fallback ticks carry no plan, so the last planned forces hold.
            if phase == "stance-jump":
                if not out.fallback:
                    planned_forces = np.array([
                        out.contact_forces.get("left_sole", np.zeros(6))[2],
                        out.contact_forces.get("right_sole", np.zeros(6))[2]])
                forces = planned_forces
            else:
                forces = np.array([meas.contact_forces["left_sole"][2],
                                   meas.contact_forces["right_sole"][2]])
            new_phase = machine.update(t + dt_tick, com[2], mk.com_velocity[2],
                                       np.array([fl, fr]), forces)
            if new_phase != prev_phase:
                if new_phase == "flight":
                    lo = {"t": t + dt_tick, "z": z, "vz": vz, "x": x, "vx": vx}
                    # extrapolate the command one tick to stay continuous
                    lo["z"] += vz * dt_tick - 0.5 * g_mag * dt_tick**2
                    lo["vz"] = vz - g_mag * dt_tick
                    lo["x"] += vx * dt_tick
                    lo["vx"] = vx
                    _enter_flight(cfg, ctrl, foot_pose_stand)
                elif new_phase == "landing":
                    ft = t + dt_tick - lo["t"]
                    z_td = lo["z"] + lo["vz"] * ft - 0.5 * g_mag * ft * ft
                    vz_td = lo["vz"] - g_mag * ft
                    x_td = lo["x"] + lo["vx"] * ft
                    landing["t"] = t + dt_tick
                    landing["z"] = fit_sixth_order(z_td, vz_td, -g_mag, z0, 0.0, 0.0,
                                                   tr["landing_duration_s"], kind=poly_kind)
                    landing["x"] = fit_sixth_order(x_td, lo["vx"], 0.0, x_td, 0.0, 0.0,
                                                   tr["landing_duration_s"], kind=poly_kind)
                    _enter_stance(cfg, ctrl)
                prev_phase = new_phase
    except SimulationBlowup as e:
        log.aborted = True
        log.abort_reason = str(e)
    return log.finalize()


def _enter_flight(cfg, ctrl, foot_poses):
    """Swap to the flight task set: feet held at their standing poses."""
    g = cfg["gains"][cfg["controller"]]
    if cfg["controller"] == "id":
        kp6 = np.array([g["foot_pos_kp"]] * 3 + [g["foot_ori_kp"]] * 3)
        kd6 = np.array([_gain(g, "foot_pos_kd")] * 3 + [_gain(g, "foot_ori_kd")] * 3)
        ctrl.tasks.pop("com", None)
        for side in ("left", "right"):
            task = TaskSpec(f"{side}_foot", f"{side}_sole", kp=kp6, kd=kd6,
                            weight=g["weight_foot"])
            pos, rot = foot_poses[side]
            task.set_reference(pos=pos, rot=rot)
            ctrl.tasks[task.name] = task
        ctrl.set_contacts(ContactSet((), mu=cfg["contact_mu"]))
    else:
        ctrl.stack.contact_frames = ()
        ctrl.stack.impedance = _foot_impedance_tasks(cfg)
        for task in ctrl.stack.impedance:
            side = task.frame.split("_")[0]
            pos, rot = foot_poses[side]
            task.set_reference(pos=pos, rot=rot)
        ctrl.solver.reset()


def _enter_stance(cfg, ctrl):
    """Swap back to the stance task set at touchdown."""
    g = cfg["gains"][cfg["controller"]]
    if cfg["controller"] == "id":
        gid = cfg["gains"]["id"]
        for side in ("left", "right"):
            ctrl.tasks.pop(f"{side}_foot", None)
        ctrl.tasks["com"] = TaskSpec("com", "com", kp=gid["com_kp"],
                                     kd=_gain(gid, "com_kd"), weight=gid["weight_com"])
        ctrl.set_contacts(ContactSet(("left_sole", "right_sole"), mu=cfg["contact_mu"], cop_box=_cop_box(cfg),
                                     velocity_damping=cfg["contact_velocity_damping"]))
    else:
        ctrl.stack.contact_frames = ("left_sole", "right_sole")
        ctrl.stack.impedance = []
        ctrl.solver.reset()
