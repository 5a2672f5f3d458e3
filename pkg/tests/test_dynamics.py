import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from wbclab import (
    ModelError,
    SystemState,
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
    model_from_dict,
    prefabs,
)
from wbclab.dynamics import Kinematics
from wbclab.spatial import so3_log

from conftest import fd_mass_matrix_dot, shifted_config


# ---------------------------------------------------------------------------
# mass matrix
# ---------------------------------------------------------------------------

def test_pendulum_joint_block_is_point_mass_inertia():
    mass, length = 1.7, 0.45
    model = prefabs.pendulum(mass=mass, length=length)
    st = SystemState.neutral(model)
    M = mass_matrix(model, st)
    # rod carries a tiny (1e-6) proper inertia on top of m l^2
    assert abs(M[6, 6] - mass * length**2) < 1e-5


def test_mass_matrix_symmetric_and_positive_definite(biped):
    for seed in range(10):
        st = prefabs.random_state(biped, seed=seed)
        M = mass_matrix(biped, st)
        assert np.max(np.abs(M - M.T)) <= 1e-10
        np.linalg.cholesky(M)  # raises if not PD


def test_mass_matrix_columns_match_inverse_dynamics_probe(chain):
    # oracle: column j of M is the generalized force for a unit acceleration
    # on coordinate j at zero velocity with gravity off (RNEA probe)
    st = prefabs.random_state(chain, seed=1)
    st = SystemState(st.quat, st.pos, st.q, np.zeros(chain.nv))
    M = mass_matrix(chain, st)
    for j in range(chain.nv):
        e = np.zeros(chain.nv)
        e[j] = 1.0
        col = inverse_dynamics(chain, st, e, gravity=False)
        assert np.max(np.abs(col - M[:, j])) < 1e-10


# ---------------------------------------------------------------------------
# bias forces
# ---------------------------------------------------------------------------

def test_bias_equals_gravity_at_zero_velocity(biped):
    st = prefabs.random_state(biped, seed=2, vel_scale=0.0)
    assert np.allclose(bias_forces(biped, st), gravity_vector(biped, st), atol=1e-12)


def test_bias_energy_rate_along_free_fall(chain):
    # oracle: with tau = 0 and no contact, d/dt KE = -nu^T tau_g, so
    # KE(t) - KE(0) + integral(nu^T tau_g) ~ 0 along a simulated free fall
    st = prefabs.random_state(chain, seed=3, vel_scale=0.5)
    dt, steps = 1e-4, 2000
    ke0 = 0.5 * st.nu @ mass_matrix(chain, st) @ st.nu
    work = 0.0
    for _ in range(steps):
        kin = Kinematics(chain, st)
        nu_dot = np.linalg.solve(kin.M, -kin.bias)
        power = -st.nu @ kin.gravity
        st_next = integrate(st, nu_dot, dt)
        kin_next = Kinematics(chain, st_next)
        power_next = -st_next.nu @ kin_next.gravity
        work += 0.5 * (power + power_next) * dt
        st = st_next
    ke1 = 0.5 * st.nu @ mass_matrix(chain, st) @ st.nu
    scale = max(abs(ke1 - ke0), 1.0)
    assert abs((ke1 - ke0) - work) / scale < 2e-3


def test_pendulum_hanging_at_rest_has_zero_joint_bias():
    model = prefabs.pendulum()
    st = SystemState.neutral(model)  # rod hangs straight down along -z
    h = bias_forces(model, st)
    assert abs(h[6]) < 1e-12


# ---------------------------------------------------------------------------
# Coriolis matrix
# ---------------------------------------------------------------------------

def test_coriolis_zero_at_zero_velocity(biped):
    st = prefabs.random_state(biped, seed=4, vel_scale=0.0)
    assert np.max(np.abs(coriolis_matrix(biped, st))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_coriolis_consistent_with_bias(biped, seed):
    st = prefabs.random_state(biped, seed=seed)
    C = coriolis_matrix(biped, st)
    h = bias_forces(biped, st)
    tg = gravity_vector(biped, st)
    assert np.max(np.abs(C @ st.nu - (h - tg))) <= 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_mdot_minus_2c_skew_symmetric(biped, seed):
    st = prefabs.random_state(biped, seed=seed)
    Md = fd_mass_matrix_dot(biped, st, eps=1e-6)
    S = Md - 2 * coriolis_matrix(biped, st)
    assert np.max(np.abs(S + S.T)) <= 1e-6


# ---------------------------------------------------------------------------
# gravity vector
# ---------------------------------------------------------------------------

def test_gravity_base_rows_sum_to_total_weight(biped):
    # oracle: sum of link weights
    weight = sum(l.mass for l in biped.links) * np.linalg.norm(biped.gravity)
    st = prefabs.random_state(biped, seed=5)
    tg = gravity_vector(biped, st)
    assert abs(np.linalg.norm(tg[:3]) - weight) < 1e-9
    assert np.allclose(tg[:3], -biped.total_mass * biped.gravity, atol=1e-9)


def test_gravity_zero_in_weightless_model():
    doc = prefabs.biped_dict()
    doc["gravity"] = [0.0, 0.0, 0.0]
    model = model_from_dict(doc)
    st = prefabs.random_state(model, seed=6)
    assert np.max(np.abs(gravity_vector(model, st))) == 0.0


# ---------------------------------------------------------------------------
# frame Jacobians and drifts
# ---------------------------------------------------------------------------

def test_base_frame_jacobian_structure(biped):
    st = prefabs.random_state(biped, seed=7)
    J = frame_jacobian(biped, st, "torso_frame")
    assert np.allclose(J[:, 0:6], np.eye(6), atol=1e-12)
    assert np.max(np.abs(J[:, 6:])) == 0.0


@pytest.mark.parametrize("seed", range(8))
def test_frame_jacobian_finite_difference(biped, seed):
    st = prefabs.random_state(biped, seed=seed)
    kin = Kinematics(biped, st)
    name = "left_sole" if seed % 2 == 0 else "right_sole"
    J = kin.frame_jacobian(name)
    rng = np.random.default_rng(seed)
    d = rng.normal(size=biped.nv)
    d /= np.linalg.norm(d)
    eps = 1e-7
    kp = Kinematics(biped, shifted_config(biped, st, d, eps))
    dlin = (kp.frame_position(name) - kin.frame_position(name)) / eps
    dang = so3_log(kp.frame_rotation(name) @ kin.frame_rotation(name).T) / eps
    assert np.max(np.abs(dlin - (J @ d)[:3])) < 1e-5
    assert np.max(np.abs(dang - (J @ d)[3:])) < 1e-5


def test_uninvolved_subtree_columns_are_zero(biped):
    st = prefabs.random_state(biped, seed=8)
    J = frame_jacobian(biped, st, "left_sole")
    right_rows = [6 + k for k, nm in enumerate(biped.joint_names) if nm.startswith("right_")]
    assert np.max(np.abs(J[:, right_rows])) == 0.0


def test_drift_zero_at_zero_velocity(biped):
    st = prefabs.random_state(biped, seed=9, vel_scale=0.0)
    assert np.max(np.abs(frame_acceleration_drift(biped, st, "left_sole"))) < 1e-12


def test_drift_zero_for_pure_base_translation(biped):
    st = prefabs.random_state(biped, seed=10, vel_scale=0.0)
    nu = np.zeros(biped.nv)
    nu[0:3] = [0.3, -0.2, 0.1]
    st = SystemState(st.quat, st.pos, st.q, nu)
    assert np.max(np.abs(frame_acceleration_drift(biped, st, "right_sole"))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_drift_finite_difference(biped, seed):
    st = prefabs.random_state(biped, seed=seed)
    kin = Kinematics(biped, st)
    name = "left_sole"
    eps = 1e-6
    kp = Kinematics(biped, shifted_config(biped, st, st.nu, eps))
    Jd_fd = (kp.frame_jacobian(name) - kin.frame_jacobian(name)) / eps
    assert np.max(np.abs(Jd_fd @ st.nu - kin.frame_drift(name))) < 1e-4


# ---------------------------------------------------------------------------
# CoM dynamics
# ---------------------------------------------------------------------------

def test_com_gravity_special_form(biped):
    st = prefabs.random_state(biped, seed=11)
    cd = com_dynamics(biped, st)
    w_g_expect = np.concatenate([biped.total_mass * biped.gravity, np.zeros(3)])
    assert np.array_equal(cd.w_g, w_g_expect)
    assert np.array_equal(cd.gravity[:6], -w_g_expect)
    assert np.max(np.abs(cd.gravity[6:])) == 0.0
    # and the coordinate change maps tau_g to exactly that form
    tg = gravity_vector(biped, st)
    assert np.max(np.abs(cd.T.T @ tg - cd.gravity)) < 1e-9


def test_single_body_com_dynamics_block_diagonal():
    model = prefabs.single_body()
    st = prefabs.random_state(model, seed=12)
    cd = com_dynamics(model, st)
    m = model.total_mass
    assert np.allclose(cd.M_c[0:3, 0:3], m * np.eye(3), atol=1e-10)
    assert np.max(np.abs(cd.M_c[0:3, 3:6])) < 1e-10
    kin = Kinematics(model, st)
    I_com_world = kin.R[0] @ model.body_inertia[0] @ kin.R[0].T
    assert np.allclose(cd.M_c[3:6, 3:6], I_com_world, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_kinetic_energy_invariance(biped, seed):
    st = prefabs.random_state(biped, seed=seed)
    M = mass_matrix(biped, st)
    cd = com_dynamics(biped, st)
    assert abs(0.5 * st.nu @ M @ st.nu - 0.5 * cd.nu_p @ cd.M_c @ cd.nu_p) < 1e-9


def test_com_mdot_minus_2c_skew(biped):
    st = prefabs.random_state(biped, seed=13)
    eps = 1e-6
    cdp = Kinematics(biped, shifted_config(biped, st, st.nu, eps)).com_dynamics()
    cdm = Kinematics(biped, shifted_config(biped, st, st.nu, -eps)).com_dynamics()
    Sk = (cdp.M_c - cdm.M_c) / (2 * eps) - 2 * com_dynamics(biped, st).C_c
    assert np.max(np.abs(Sk + Sk.T)) <= 1e-6


# ---------------------------------------------------------------------------
# forward dynamics
# ---------------------------------------------------------------------------

def test_welded_equilibrium_with_gravity_compensation(biped):
    st = prefabs.standing_state(biped)
    tau = gravity_vector(biped, st)[6:]
    nu_dot = forward_dynamics(biped, st, tau, locked_base=True)
    assert np.max(np.abs(nu_dot)) < 1e-8


def test_free_fall_com_acceleration_is_g(biped):
    st = prefabs.random_state(biped, seed=14)
    nu_dot = forward_dynamics(biped, st, np.zeros(biped.n))
    kin = Kinematics(biped, st)
    a_com = kin.com_jacobian @ nu_dot + kin.com_drift()
    assert np.max(np.abs(a_com - biped.gravity)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_forward_dynamics_residual(biped, seed):
    rng = np.random.default_rng(seed)
    st = prefabs.random_state(biped, seed=seed)
    tau = rng.normal(size=biped.n) * 30
    w = rng.normal(size=6) * 50
    nu_dot = forward_dynamics(biped, st, tau, external_wrenches=[("left_sole", w)])
    kin = Kinematics(biped, st)
    res = kin.M @ nu_dot + kin.bias
    res[6:] -= tau
    res -= kin.frame_jacobian("left_sole").T @ w
    assert np.max(np.abs(res)) < 1e-8


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def test_integrate_noop(biped):
    st = prefabs.standing_state(biped)
    out = integrate(st, np.zeros(biped.nv), 1e-3)
    assert np.array_equal(out.quat, st.quat)
    assert np.array_equal(out.pos, st.pos)
    assert np.array_equal(out.q, st.q)


def test_integrate_constant_yaw_rate(biped):
    st = prefabs.standing_state(biped)
    wz = 0.7
    nu = np.zeros(biped.nv)
    nu[5] = wz
    st = SystemState(st.quat, st.pos, st.q, nu)
    dt = 1e-3
    for _ in range(1000):
        st = integrate(st, np.zeros(biped.nv), dt)
    kin = Kinematics(biped, st)
    yaw = so3_log(kin.R[0])
    assert abs(yaw[2] - wz * 1.0) < 1e-6
    assert abs(np.linalg.norm(st.quat) - 1.0) < 1e-12


def test_pendulum_energy_drift_bounded():
    model = prefabs.pendulum(mass=1.0, length=0.5)
    st = SystemState.neutral(model)
    q = np.array([1.2])  # released from 69 degrees
    st = SystemState(st.quat, st.pos, q, np.zeros(model.nv))

    # conservation oracle: E = KE + m g h with h the point-mass height
    def total_energy(s):
        kin = Kinematics(model, s)
        ke = 0.5 * s.nu @ kin.M @ s.nu
        h = kin.com_w[1][2]
        return ke + model.body_mass[1] * 9.81 * h

    e0 = total_energy(st)
    dt = 1e-4
    worst = 0.0
    e_ref = abs(model.body_mass[1] * 9.81 * 0.5)  # scale: m g l
    for i in range(100_000):
        nu_dot = forward_dynamics(model, st, np.zeros(model.n), locked_base=True)
        st = integrate(st, nu_dot, dt, locked_base=True)
        if i % 1000 == 0:
            worst = max(worst, abs(total_energy(st) - e0))
    worst = max(worst, abs(total_energy(st) - e0))
    assert worst / e_ref < 0.005


# ---------------------------------------------------------------------------
# model validation / state invariants
# ---------------------------------------------------------------------------

def test_rejects_negative_mass():
    doc = prefabs.biped_dict()
    doc["links"][0]["mass"] = -1.0
    with pytest.raises(ModelError, match="torso"):
        model_from_dict(doc)


def test_rejects_asymmetric_inertia_naming_link():
    doc = prefabs.biped_dict()
    doc["links"][2]["inertia"][0][1] = 0.2  # one-sided off-diagonal
    name = doc["links"][2]["name"]
    with pytest.raises(ModelError, match=name):
        model_from_dict(doc)


def test_rejects_unknown_keys():
    doc = prefabs.biped_dict()
    doc["links"][0]["color"] = "red"
    with pytest.raises(ModelError, match="color"):
        model_from_dict(doc)
    doc = prefabs.biped_dict()
    doc["extra"] = 1
    with pytest.raises(ModelError, match="extra"):
        model_from_dict(doc)


def test_rejects_two_free_flyers():
    doc = prefabs.biped_dict()
    doc["joints"].append({"name": "root2", "type": "free-flyer", "parent": "world", "child": "left_foot"})
    with pytest.raises(ModelError, match="free-flyer"):
        model_from_dict(doc)


def test_rejects_non_unit_axis():
    doc = prefabs.biped_dict()
    doc["joints"][1]["axis"] = [0.0, 0.0, 2.0]
    with pytest.raises(ModelError, match="unit"):
        model_from_dict(doc)


def test_state_rejects_unnormalized_quaternion(biped):
    with pytest.raises(ValueError, match="quaternion"):
        SystemState(np.array([1.0, 0.1, 0.0, 0.0]), np.zeros(3),
                    np.zeros(biped.n), np.zeros(biped.nv))


# ---------------------------------------------------------------------------
# fast path vs reference path
# ---------------------------------------------------------------------------

def test_numba_and_numpy_paths_agree(biped, tmp_path):
    from wbclab.dynamics import _fast
    if _fast is None:
        pytest.skip("numba path not active")
    script = textwrap.dedent("""
        import numpy as np
        from wbclab import prefabs
        from wbclab.dynamics import Kinematics, _fast
        assert _fast is None, "env var did not disable numba"
        m = prefabs.default_biped()
        out = {}
        for seed in range(4):
            st = prefabs.random_state(m, seed=seed)
            k = Kinematics(m, st)
            out[f"M{seed}"] = k.M
            out[f"h{seed}"] = k.bias
            out[f"g{seed}"] = k.gravity
        np.savez(r"%s", **out)
    """ % (tmp_path / "ref.npz"))
    env = dict(os.environ, WBCLAB_NO_NUMBA="1")
    subprocess.run([sys.executable, "-c", script], check=True, env=env)
    ref = np.load(tmp_path / "ref.npz")
    for seed in range(4):
        st = prefabs.random_state(biped, seed=seed)
        k = Kinematics(biped, st)
        assert np.max(np.abs(k.M - ref[f"M{seed}"])) < 1e-11
        assert np.max(np.abs(k.bias - ref[f"h{seed}"])) < 1e-11
        assert np.max(np.abs(k.gravity - ref[f"g{seed}"])) < 1e-11
