import numpy as np
import pytest

from wbclab import prefabs
from wbclab.dynamics import Kinematics, integrate
from wbclab.model import SystemState


@pytest.fixture(scope="session")
def biped():
    return prefabs.default_biped()


@pytest.fixture(scope="session")
def chain():
    return prefabs.serial_chain(3, seed=7)


def shifted_config(model, state, direction, eps):
    """State with configuration moved along direction * eps, velocity kept."""
    probe = SystemState(state.quat, state.pos, state.q, np.asarray(direction) * np.sign(eps))
    out = integrate(probe, np.zeros(model.nv), abs(eps))
    return SystemState(out.quat, out.pos, out.q, state.nu)


def fd_mass_matrix_dot(model, state, eps=1e-6):
    Mp = Kinematics(model, shifted_config(model, state, state.nu, eps)).M
    Mm = Kinematics(model, shifted_config(model, state, state.nu, -eps)).M
    return (Mp - Mm) / (2 * eps)
