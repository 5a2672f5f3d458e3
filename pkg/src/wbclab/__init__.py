"""Floating-base rigid-body dynamics and whole-body-control workbench."""

from .model import Frame, Joint, Link, ModelError, RobotModel, SystemState, load_model, model_from_dict
from .dynamics import (
    ComDynamics,
    Kinematics,
    bias_forces,
    com_dynamics,
    coriolis_matrix,
    forward_dynamics,
    frame_acceleration_drift,
    frame_jacobian,
    gravity_vector,
    integrate,
    inverse_dynamics,
    mass_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "Frame", "Joint", "Link", "ModelError", "RobotModel", "SystemState",
    "load_model", "model_from_dict",
    "ComDynamics", "Kinematics",
    "mass_matrix", "bias_forces", "coriolis_matrix", "gravity_vector",
    "frame_jacobian", "frame_acceleration_drift", "com_dynamics",
    "forward_dynamics", "inverse_dynamics", "integrate",
    "__version__",
]
