"""Rotation and spatial-vector helpers.

Conventions used throughout the package:

* quaternions are (w, x, y, z), unit norm, mapping body -> world
* rotation vectors are axis * angle, world frame
* 6D spatial motion vectors are (angular; linear-at-world-origin),
  6D spatial force vectors are (moment-about-origin; force).  These stay
  internal to the dynamics code.
* task/frame 6-vectors exposed by the public API are (linear; angular),
  matching the generalized-velocity ordering nu = (v_base, w_base, nu_joints).
"""

from __future__ import annotations

import math

import numpy as np


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 matrix S with S @ u == cross(v, u)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula: rotation matrix for rotation vector w."""
    theta = math.sqrt(float(w[0] ** 2 + w[1] ** 2 + w[2] ** 2))
    W = skew(w)
    if theta < 1e-10:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R (inverse of so3_exp); vee(log R)."""
    trace = float(np.trace(R))
    cos_theta = max(-1.0, min(1.0, 0.5 * (trace - 1.0)))
    theta = math.acos(cos_theta)
    if theta < 1e-10:
        # first-order: R ~ I + skew(w)
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta > math.pi - 1e-6:
        # near pi the antisymmetric part degenerates; use the symmetric part
        A = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(A)))
        col = A[:, k]
        axis = col / math.sqrt(max(col[k], 1e-12))
        axis = axis / np.linalg.norm(axis)
        # fix sign using the antisymmetric part
        w_small = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if float(w_small @ axis) < 0.0:
            axis = -axis
        return theta * axis
    factor = theta / (2.0 * math.sin(theta))
    return factor * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def orientation_error(R_ref: np.ndarray, R: np.ndarray) -> np.ndarray:
    """World-frame orientation error vee(log(R_ref @ R^T))."""
    return so3_log(R_ref @ R.T)


# ---------------------------------------------------------------------------
# quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(q))
    if n <= 1e-15:
        raise ValueError("cannot normalize zero quaternion")
    out = q / n
    return out


def quat_mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_from_rotvec(w: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(w[0] ** 2 + w[1] ** 2 + w[2] ** 2))
    if theta < 1e-12:
        return quat_normalize(np.array([1.0, 0.5 * w[0], 0.5 * w[1], 0.5 * w[2]]))
    half = 0.5 * theta
    s = math.sin(half) / theta
    return np.array([math.cos(half), s * w[0], s * w[1], s * w[2]])


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    t = float(np.trace(R))
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        k = int(np.argmax(np.diag(R)))
        i, j = (k + 1) % 3, (k + 2) % 3
        s = math.sqrt(max(1.0 + R[k, k] - R[i, i] - R[j, j], 1e-15)) * 2.0
        q = np.empty(4)
        q[0] = (R[j, i] - R[i, j]) / s
        q[1 + k] = 0.25 * s
        q[1 + i] = (R[i, k] + R[k, i]) / s
        q[1 + j] = (R[j, k] + R[k, j]) / s
    return quat_normalize(q)


# ---------------------------------------------------------------------------
# spatial vectors at the world origin, motion = (omega; v_origin)
# ---------------------------------------------------------------------------

def spatial_inertia(mass: float, com_world: np.ndarray, inertia_com_world: np.ndarray) -> np.ndarray:
    """6x6 spatial inertia about the world origin."""
    C = skew(com_world)
    I = np.empty((6, 6))
    I[:3, :3] = inertia_com_world + mass * (C @ C.T)
    I[:3, 3:] = mass * C
    I[3:, :3] = mass * C.T
    I[3:, 3:] = mass * np.eye(3)
    return I


def cross_motion(v: np.ndarray) -> np.ndarray:
    """Spatial cross product matrix (v x) acting on motion vectors."""
    W = skew(v[:3])
    V = skew(v[3:])
    out = np.zeros((6, 6))
    out[:3, :3] = W
    out[3:, :3] = V
    out[3:, 3:] = W
    return out


def cross_force(v: np.ndarray) -> np.ndarray:
    """Spatial cross product matrix (v x*) acting on force vectors."""
    W = skew(v[:3])
    V = skew(v[3:])
    out = np.zeros((6, 6))
    out[:3, :3] = W
    out[:3, 3:] = V
    out[3:, 3:] = W
    return out


def cross_motion_apply(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """(v x) m without building the 6x6 matrix."""
    w, vo = v[:3], v[3:]
    mw, mv = m[:3], m[3:]
    return np.concatenate([np.cross(w, mw), np.cross(vo, mw) + np.cross(w, mv)])


def cross_force_apply(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(v x*) f without building the 6x6 matrix."""
    w, vo = v[:3], v[3:]
    n, fl = f[:3], f[3:]
    return np.concatenate([np.cross(w, n) + np.cross(vo, fl), np.cross(w, fl)])
