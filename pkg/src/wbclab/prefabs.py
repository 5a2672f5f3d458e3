"""Built-in robot models used by scenarios, demos, and tests.

The desk biped is the workhorse: 41.0 kg total, six revolute joints per
leg (yaw/roll/pitch hip, pitch knee, pitch/roll ankle) so that the
passivity-based task stack (6 CoM/orientation rows + two 6D contact
tasks) is exactly square.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import Kinematics
from .model import RobotModel, SystemState, model_from_dict


def _leg(side: str, sy: float) -> tuple[list[dict], list[dict]]:
    s = side
    links = [
        {"name": f"{s}_hip1", "mass": 0.8, "com": [0.0, 0.0, -0.02],
         "inertia": [[0.004, 0.0, 0.0], [0.0, 0.004, 0.0], [0.0, 0.0, 0.004]]},
        {"name": f"{s}_hip2", "mass": 0.7, "com": [0.0, 0.0, 0.0],
         "inertia": [[0.003, 0.0, 0.0], [0.0, 0.003, 0.0], [0.0, 0.0, 0.003]]},
        {"name": f"{s}_thigh", "mass": 3.2, "com": [0.0, 0.0, -0.20],
         "inertia": [[0.045, 0.0, 0.0], [0.0, 0.045, 0.0], [0.0, 0.0, 0.008]]},
        {"name": f"{s}_shank", "mass": 2.2, "com": [0.0, 0.0, -0.19],
         "inertia": [[0.035, 0.0, 0.0], [0.0, 0.035, 0.0], [0.0, 0.0, 0.005]]},
        {"name": f"{s}_ankle", "mass": 0.6, "com": [0.0, 0.0, 0.0],
         "inertia": [[0.002, 0.0, 0.0], [0.0, 0.002, 0.0], [0.0, 0.0, 0.002]]},
        {"name": f"{s}_foot", "mass": 1.5, "com": [0.01, 0.0, -0.04],
         "inertia": [[0.010, 0.0, 0.0], [0.0, 0.014, 0.0], [0.0, 0.0, 0.015]]},
    ]
    joints = [
        {"name": f"{s}_hip_yaw", "type": "revolute", "parent": "torso", "child": f"{s}_hip1",
         "axis": [0.0, 0.0, 1.0], "origin": [0.0, sy, -0.12],
         "position_limits": [-1.0, 1.0], "torque_limit": 250.0},
        {"name": f"{s}_hip_roll", "type": "revolute", "parent": f"{s}_hip1", "child": f"{s}_hip2",
         "axis": [1.0, 0.0, 0.0], "origin": [0.0, 0.0, -0.04],
         "position_limits": [-0.8, 0.8], "torque_limit": 250.0},
        {"name": f"{s}_hip_pitch", "type": "revolute", "parent": f"{s}_hip2", "child": f"{s}_thigh",
         "axis": [0.0, 1.0, 0.0], "origin": [0.0, 0.0, 0.0],
         "position_limits": [-1.2, 2.0], "torque_limit": 400.0},
        {"name": f"{s}_knee", "type": "revolute", "parent": f"{s}_thigh", "child": f"{s}_shank",
         "axis": [0.0, 1.0, 0.0], "origin": [0.0, 0.0, -0.42],
         "position_limits": [-2.4, 0.05], "torque_limit": 400.0},
        {"name": f"{s}_ankle_pitch", "type": "revolute", "parent": f"{s}_shank", "child": f"{s}_ankle",
         "axis": [0.0, 1.0, 0.0], "origin": [0.0, 0.0, -0.42],
         "position_limits": [-1.0, 1.5], "torque_limit": 300.0},
        {"name": f"{s}_ankle_roll", "type": "revolute", "parent": f"{s}_ankle", "child": f"{s}_foot",
         "axis": [1.0, 0.0, 0.0], "origin": [0.0, 0.0, 0.0],
         "position_limits": [-0.6, 0.6], "torque_limit": 200.0},
    ]
    return links, joints


def biped_dict() -> dict:
    """Model document for the default desk biped (41.0 kg, n = 12)."""
    links = [
        {"name": "torso", "mass": 23.0, "com": [0.063, 0.0, 0.18],
         "inertia": [[0.65, 0.0, 0.0], [0.0, 0.55, 0.0], [0.0, 0.0, 0.25]]},
    ]
    joints = [
        {"name": "root", "type": "free-flyer", "parent": "world", "child": "torso"},
    ]
    for side, sy in (("left", 0.10), ("right", -0.10)):
        l, j = _leg(side, sy)
        links += l
        joints += j
    frames = [
        {"name": "left_sole", "link": "left_foot", "offset": [0.0, 0.0, -0.06]},
        {"name": "right_sole", "link": "right_foot", "offset": [0.0, 0.0, -0.06]},
        {"name": "torso_frame", "link": "torso", "offset": [0.0, 0.0, 0.0]},
    ]
    return {
        "name": "desk_biped",
        "gravity": [0.0, 0.0, -9.81],
        "links": links,
        "joints": joints,
        "frames": frames,
    }


def default_biped() -> RobotModel:
    return model_from_dict(biped_dict())


def biped_leg_pose(bend: float) -> np.ndarray:
    """Symmetric leg joint vector for knee bend angle ``2 * bend``.

    Keeps the foot flat and the ankle directly under the hip.
    """
    return np.array([0.0, 0.0, bend, -2.0 * bend, bend, 0.0])


def standing_state(model: RobotModel, bend: float = 0.70,
                   sole_frames: tuple[str, str] = ("left_sole", "right_sole")) -> SystemState:
    """Standing posture with both soles flat on the ground plane z = 0."""
    q = np.concatenate([biped_leg_pose(bend), biped_leg_pose(bend)])
    st = SystemState(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), q, np.zeros(model.nv))
    kin = Kinematics(model, st)
    sole_z = min(kin.frame_position(f)[2] for f in sole_frames)
    return SystemState(st.quat, np.array([0.0, 0.0, -sole_z]), q, st.nu)


def hanging_state(model: RobotModel, bend: float = 0.26, base_height: float = 1.6) -> SystemState:
    """Crane posture: legs nearly extended, base held at ``base_height``."""
    q = np.concatenate([biped_leg_pose(bend), biped_leg_pose(bend)])
    return SystemState(np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 0.0, base_height]),
                       q, np.zeros(model.nv))


def one_dof_slider(mass: float = 41.0) -> RobotModel:
    """Free-flyer + one prismatic x joint carrying a point mass.

    Used welded-base as the 1-DoF plant for the closed-form error-law
    experiments; the slider motion is orthogonal to gravity.
    """
    doc = {
        "name": f"slider_{mass:g}kg",
        "gravity": [0.0, 0.0, -9.81],
        "links": [
            {"name": "base_block", "mass": 10.0, "com": [0.0, 0.0, 0.0],
             "inertia": [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]]},
            {"name": "slider", "mass": mass, "com": [0.0, 0.0, 0.0],
             "inertia": [[1e-4, 0.0, 0.0], [0.0, 1e-4, 0.0], [0.0, 0.0, 1e-4]]},
        ],
        "joints": [
            {"name": "root", "type": "free-flyer", "parent": "world", "child": "base_block"},
            {"name": "slide_x", "type": "prismatic", "parent": "base_block", "child": "slider",
             "axis": [1.0, 0.0, 0.0], "origin": [0.0, 0.0, 0.0],
             "position_limits": [-10.0, 10.0], "torque_limit": 1e5},
        ],
        "frames": [
            {"name": "slider_tip", "link": "slider", "offset": [0.0, 0.0, 0.0]},
        ],
    }
    return model_from_dict(doc)


def pendulum(mass: float = 1.0, length: float = 0.5) -> RobotModel:
    """Point mass on a massless rod, revolute about the world y axis."""
    doc = {
        "name": "pendulum",
        "gravity": [0.0, 0.0, -9.81],
        "links": [
            {"name": "base_block", "mass": 5.0, "com": [0.0, 0.0, 0.0],
             "inertia": [[0.05, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.05]]},
            {"name": "rod", "mass": mass, "com": [0.0, 0.0, -length],
             "inertia": [[1e-6, 0.0, 0.0], [0.0, 1e-6, 0.0], [0.0, 0.0, 1e-6]]},
        ],
        "joints": [
            {"name": "root", "type": "free-flyer", "parent": "world", "child": "base_block"},
            {"name": "swing", "type": "revolute", "parent": "base_block", "child": "rod",
             "axis": [0.0, 1.0, 0.0], "origin": [0.0, 0.0, 0.0],
             "position_limits": [-12.0, 12.0], "torque_limit": 1e4},
        ],
        "frames": [
            {"name": "tip", "link": "rod", "offset": [0.0, 0.0, -length]},
        ],
    }
    return model_from_dict(doc)


def single_body() -> RobotModel:
    """Just a floating rigid body (n = 0)."""
    doc = {
        "name": "single_body",
        "gravity": [0.0, 0.0, -9.81],
        "links": [
            {"name": "body", "mass": 7.5, "com": [0.02, -0.01, 0.05],
             "inertia": [[0.30, 0.01, 0.0], [0.01, 0.25, 0.02], [0.0, 0.02, 0.20]]},
        ],
        "joints": [
            {"name": "root", "type": "free-flyer", "parent": "world", "child": "body"},
        ],
        "frames": [
            {"name": "body_frame", "link": "body", "offset": [0.0, 0.0, 0.0]},
        ],
    }
    return model_from_dict(doc)


def serial_chain(n_joints: int = 3, seed: int = 0) -> RobotModel:
    """Floating base plus a randomized serial chain, for property tests."""
    rng = np.random.default_rng(seed)
    links = [
        {"name": "link0", "mass": 4.0 + rng.uniform(0, 2), "com": rng.uniform(-0.05, 0.05, 3).tolist(),
         "inertia": _random_inertia(rng)},
    ]
    joints = [
        {"name": "root", "type": "free-flyer", "parent": "world", "child": "link0"},
    ]
    axes = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    for k in range(n_joints):
        parent = f"link{k}"
        child = f"link{k + 1}"
        links.append({
            "name": child, "mass": 0.8 + rng.uniform(0, 1.5),
            "com": (np.array([0.0, 0.0, -0.12]) + rng.uniform(-0.03, 0.03, 3)).tolist(),
            "inertia": _random_inertia(rng),
        })
        jtype = "prismatic" if (k == n_joints - 1 and n_joints >= 3) else "revolute"
        joints.append({
            "name": f"j{k}", "type": jtype, "parent": parent, "child": child,
            "axis": axes[k % 3],
            "origin": (np.array([0.0, 0.0, -0.25]) + rng.uniform(-0.05, 0.05, 3)).tolist(),
            "position_limits": [-3.0, 3.0], "torque_limit": 500.0,
        })
    frames = [
        {"name": "tip", "link": f"link{n_joints}", "offset": [0.0, 0.02, -0.15]},
        {"name": "base_frame", "link": "link0", "offset": [0.0, 0.0, 0.0]},
    ]
    return model_from_dict({
        "name": f"chain{n_joints}", "gravity": [0.0, 0.0, -9.81],
        "links": links, "joints": joints, "frames": frames,
    })


def _random_inertia(rng) -> list:
    A = rng.uniform(-0.05, 0.05, (3, 3))
    I = A @ A.T + 0.01 * np.eye(3)
    return I.tolist()


def random_state(model: RobotModel, seed: int = 0, vel_scale: float = 1.0) -> SystemState:
    rng = np.random.default_rng(seed)
    quat = rng.normal(size=4)
    quat /= np.linalg.norm(quat)
    pos = rng.uniform(-1.0, 1.0, 3)
    lo = np.maximum(model.position_lower, -1.2)
    hi = np.minimum(model.position_upper, 1.2)
    q = rng.uniform(lo, hi)
    nu = vel_scale * rng.uniform(-1.0, 1.0, model.nv)
    return SystemState(quat, pos, q, nu)
