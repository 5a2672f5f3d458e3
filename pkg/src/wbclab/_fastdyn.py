"""Numba-compiled kernels for the 10 kHz plant loop.

Optional: importing this module requires numba.  The pure-numpy
implementations in dynamics.py are the reference; a regression test pins
both paths to each other.  Disable with WBCLAB_NO_NUMBA=1.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def fk_kernel(parent, jix, is_rev, axis, origin, Rbase, pos, qj, nu,
              body_mass, body_com, body_inertia):
    nb = parent.shape[0]
    n = qj.shape[0]
    nv = n + 6

    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    S = np.zeros((nv, 6))
    Sd = np.zeros((nv, 6))
    v = np.empty((nb, 6))

    R[0] = Rbase
    p[0] = pos

    S[0, 3] = 1.0
    S[1, 4] = 1.0
    S[2, 5] = 1.0
    S[3, 0] = 1.0
    S[4, 1] = 1.0
    S[5, 2] = 1.0
    S[3, 4] = pos[2]
    S[3, 5] = -pos[1]
    S[4, 3] = -pos[2]
    S[4, 5] = pos[0]
    S[5, 3] = pos[1]
    S[5, 4] = -pos[0]
    Sd[3, 4] = nu[2]
    Sd[3, 5] = -nu[1]
    Sd[4, 3] = -nu[2]
    Sd[4, 5] = nu[0]
    Sd[5, 3] = nu[1]
    Sd[5, 4] = -nu[0]

    v[0, 0] = nu[3]
    v[0, 1] = nu[4]
    v[0, 2] = nu[5]
    v[0, 3] = nu[0] + pos[1] * nu[5] - pos[2] * nu[4]
    v[0, 4] = nu[1] + pos[2] * nu[3] - pos[0] * nu[5]
    v[0, 5] = nu[2] + pos[0] * nu[4] - pos[1] * nu[3]

    for b in range(1, nb):
        pa = parent[b]
        k = jix[b]
        row = 6 + k
        ax0 = axis[k, 0]
        ax1 = axis[k, 1]
        ax2 = axis[k, 2]
        # joint frame origin
        pjx = p[pa, 0] + R[pa, 0, 0] * origin[k, 0] + R[pa, 0, 1] * origin[k, 1] + R[pa, 0, 2] * origin[k, 2]
        pjy = p[pa, 1] + R[pa, 1, 0] * origin[k, 0] + R[pa, 1, 1] * origin[k, 1] + R[pa, 1, 2] * origin[k, 2]
        pjz = p[pa, 2] + R[pa, 2, 0] * origin[k, 0] + R[pa, 2, 1] * origin[k, 1] + R[pa, 2, 2] * origin[k, 2]
        # world axis
        awx = R[pa, 0, 0] * ax0 + R[pa, 0, 1] * ax1 + R[pa, 0, 2] * ax2
        awy = R[pa, 1, 0] * ax0 + R[pa, 1, 1] * ax1 + R[pa, 1, 2] * ax2
        awz = R[pa, 2, 0] * ax0 + R[pa, 2, 1] * ax1 + R[pa, 2, 2] * ax2

        if is_rev[k]:
            cq = np.cos(qj[k])
            sq = np.sin(qj[k])
            o = 1.0 - cq
            # local rotation about (ax0, ax1, ax2)
            r00 = cq + o * ax0 * ax0
            r01 = o * ax0 * ax1 - sq * ax2
            r02 = o * ax0 * ax2 + sq * ax1
            r10 = o * ax1 * ax0 + sq * ax2
            r11 = cq + o * ax1 * ax1
            r12 = o * ax1 * ax2 - sq * ax0
            r20 = o * ax2 * ax0 - sq * ax1
            r21 = o * ax2 * ax1 + sq * ax0
            r22 = cq + o * ax2 * ax2
            for i in range(3):
                Ri0 = R[pa, i, 0]
                Ri1 = R[pa, i, 1]
                Ri2 = R[pa, i, 2]
                R[b, i, 0] = Ri0 * r00 + Ri1 * r10 + Ri2 * r20
                R[b, i, 1] = Ri0 * r01 + Ri1 * r11 + Ri2 * r21
                R[b, i, 2] = Ri0 * r02 + Ri1 * r12 + Ri2 * r22
            p[b, 0] = pjx
            p[b, 1] = pjy
            p[b, 2] = pjz
            S[row, 0] = awx
            S[row, 1] = awy
            S[row, 2] = awz
            S[row, 3] = pjy * awz - pjz * awy
            S[row, 4] = pjz * awx - pjx * awz
            S[row, 5] = pjx * awy - pjy * awx
        else:
            for i in range(3):
                for j in range(3):
                    R[b, i, j] = R[pa, i, j]
            p[b, 0] = pjx + awx * qj[k]
            p[b, 1] = pjy + awy * qj[k]
            p[b, 2] = pjz + awz * qj[k]
            S[row, 3] = awx
            S[row, 4] = awy
            S[row, 5] = awz

        # sdot = v_parent (motion cross) s
        w0 = v[pa, 0]
        w1 = v[pa, 1]
        w2 = v[pa, 2]
        u0 = v[pa, 3]
        u1 = v[pa, 4]
        u2 = v[pa, 5]
        s0 = S[row, 0]
        s1 = S[row, 1]
        s2 = S[row, 2]
        s3 = S[row, 3]
        s4 = S[row, 4]
        s5 = S[row, 5]
        Sd[row, 0] = w1 * s2 - w2 * s1
        Sd[row, 1] = w2 * s0 - w0 * s2
        Sd[row, 2] = w0 * s1 - w1 * s0
        Sd[row, 3] = u1 * s2 - u2 * s1 + w1 * s5 - w2 * s4
        Sd[row, 4] = u2 * s0 - u0 * s2 + w2 * s3 - w0 * s5
        Sd[row, 5] = u0 * s1 - u1 * s0 + w0 * s4 - w1 * s3

        dqk = nu[6 + k]
        for i in range(6):
            v[b, i] = v[pa, i] + S[row, i] * dqk

    # world CoM positions and spatial inertias
    com_w = np.empty((nb, 3))
    I = np.empty((nb, 6, 6))
    for b in range(nb):
        cx = p[b, 0] + R[b, 0, 0] * body_com[b, 0] + R[b, 0, 1] * body_com[b, 1] + R[b, 0, 2] * body_com[b, 2]
        cy = p[b, 1] + R[b, 1, 0] * body_com[b, 0] + R[b, 1, 1] * body_com[b, 1] + R[b, 1, 2] * body_com[b, 2]
        cz = p[b, 2] + R[b, 2, 0] * body_com[b, 0] + R[b, 2, 1] * body_com[b, 1] + R[b, 2, 2] * body_com[b, 2]
        com_w[b, 0] = cx
        com_w[b, 1] = cy
        com_w[b, 2] = cz
        m = body_mass[b]
        # RIR^T
        for i in range(3):
            t0 = R[b, i, 0] * body_inertia[b, 0, 0] + R[b, i, 1] * body_inertia[b, 1, 0] + R[b, i, 2] * body_inertia[b, 2, 0]
            t1 = R[b, i, 0] * body_inertia[b, 0, 1] + R[b, i, 1] * body_inertia[b, 1, 1] + R[b, i, 2] * body_inertia[b, 2, 1]
            t2 = R[b, i, 0] * body_inertia[b, 0, 2] + R[b, i, 1] * body_inertia[b, 1, 2] + R[b, i, 2] * body_inertia[b, 2, 2]
            for j in range(3):
                I[b, i, j] = t0 * R[b, j, 0] + t1 * R[b, j, 1] + t2 * R[b, j, 2]
        # + m * skew(c) skew(c)^T
        I[b, 0, 0] += m * (cy * cy + cz * cz)
        I[b, 1, 1] += m * (cx * cx + cz * cz)
        I[b, 2, 2] += m * (cx * cx + cy * cy)
        I[b, 0, 1] += -m * cx * cy
        I[b, 1, 0] += -m * cx * cy
        I[b, 0, 2] += -m * cx * cz
        I[b, 2, 0] += -m * cx * cz
        I[b, 1, 2] += -m * cy * cz
        I[b, 2, 1] += -m * cy * cz
        # m * skew(c) and transpose
        I[b, 0, 3] = 0.0
        I[b, 0, 4] = -m * cz
        I[b, 0, 5] = m * cy
        I[b, 1, 3] = m * cz
        I[b, 1, 4] = 0.0
        I[b, 1, 5] = -m * cx
        I[b, 2, 3] = -m * cy
        I[b, 2, 4] = m * cx
        I[b, 2, 5] = 0.0
        for i in range(3):
            for j in range(3):
                I[b, 3 + j, i] = I[b, i, 3 + j]
                I[b, 3 + i, 3 + j] = 0.0
        I[b, 3, 3] = m
        I[b, 4, 4] = m
        I[b, 5, 5] = m

    return R, p, S, Sd, v, com_w, I


@njit(cache=True)
def crba_kernel(parent, jix, S, I):
    nb = parent.shape[0]
    nv = S.shape[0]
    Ic = I.copy()
    for b in range(nb - 1, 0, -1):
        pa = parent[b]
        for i in range(6):
            for j in range(6):
                Ic[pa, i, j] += Ic[b, i, j]
    M = np.zeros((nv, nv))
    # base block
    tmp = np.empty((6, 6))
    for i in range(6):
        for j in range(6):
            acc = 0.0
            for c in range(6):
                acc += Ic[0, i, c] * S[j, c]
            tmp[i, j] = acc
    for i in range(6):
        for j in range(6):
            acc = 0.0
            for c in range(6):
                acc += S[i, c] * tmp[c, j]
            M[i, j] = acc
    F = np.empty(6)
    for b in range(nb - 1, 0, -1):
        k = jix[b]
        row = 6 + k
        for i in range(6):
            acc = 0.0
            for c in range(6):
                acc += Ic[b, i, c] * S[row, c]
            F[i] = acc
        acc = 0.0
        for c in range(6):
            acc += S[row, c] * F[c]
        M[row, row] = acc
        a = parent[b]
        while a > 0:
            ka = 6 + jix[a]
            acc = 0.0
            for c in range(6):
                acc += S[ka, c] * F[c]
            M[row, ka] = acc
            M[ka, row] = acc
            a = parent[a]
        for i in range(6):
            acc = 0.0
            for c in range(6):
                acc += S[i, c] * F[c]
            M[row, i] = acc
            M[i, row] = acc
    return M


@njit(cache=True)
def bias_kernel(parent, jix, S, Sd, v, I, com_w, body_mass, gravity, nu, gravity_on):
    """RNEA with nu_dot = 0: h = C nu + tau_g (tau_g only if gravity_on)."""
    nb = parent.shape[0]
    nv = S.shape[0]
    a = np.empty((nb, 6))
    for i in range(6):
        acc = 0.0
        for c in range(6):
            acc += Sd[c, i] * nu[c]
        a[0, i] = acc
    for b in range(1, nb):
        pa = parent[b]
        row = 6 + jix[b]
        dqk = nu[row]
        for i in range(6):
            a[b, i] = a[pa, i] + Sd[row, i] * dqk

    f = np.empty((nb, 6))
    for b in range(nb):
        Iv = np.empty(6)
        Ia = np.empty(6)
        for i in range(6):
            acc_v = 0.0
            acc_a = 0.0
            for c in range(6):
                acc_v += I[b, i, c] * v[b, c]
                acc_a += I[b, i, c] * a[b, c]
            Iv[i] = acc_v
            Ia[i] = acc_a
        w0 = v[b, 0]
        w1 = v[b, 1]
        w2 = v[b, 2]
        u0 = v[b, 3]
        u1 = v[b, 4]
        u2 = v[b, 5]
        # f = I a + (v x*) I v
        f[b, 0] = Ia[0] + w1 * Iv[2] - w2 * Iv[1] + u1 * Iv[5] - u2 * Iv[4]
        f[b, 1] = Ia[1] + w2 * Iv[0] - w0 * Iv[2] + u2 * Iv[3] - u0 * Iv[5]
        f[b, 2] = Ia[2] + w0 * Iv[1] - w1 * Iv[0] + u0 * Iv[4] - u1 * Iv[3]
        f[b, 3] = Ia[3] + w1 * Iv[5] - w2 * Iv[4]
        f[b, 4] = Ia[4] + w2 * Iv[3] - w0 * Iv[5]
        f[b, 5] = Ia[5] + w0 * Iv[4] - w1 * Iv[3]
        if gravity_on:
            m = body_mass[b]
            gx = m * gravity[0]
            gy = m * gravity[1]
            gz = m * gravity[2]
            cx = com_w[b, 0]
            cy = com_w[b, 1]
            cz = com_w[b, 2]
            f[b, 0] -= cy * gz - cz * gy
            f[b, 1] -= cz * gx - cx * gz
            f[b, 2] -= cx * gy - cy * gx
            f[b, 3] -= gx
            f[b, 4] -= gy
            f[b, 5] -= gz

    for b in range(nb - 1, 0, -1):
        pa = parent[b]
        for i in range(6):
            f[pa, i] += f[b, i]

    tau = np.empty(nv)
    for i in range(6):
        acc = 0.0
        for c in range(6):
            acc += S[i, c] * f[0, c]
        tau[i] = acc
    for b in range(1, nb):
        row = 6 + jix[b]
        acc = 0.0
        for c in range(6):
            acc += S[row, c] * f[b, c]
        tau[row] = acc
    return tau


@njit(cache=True)
def gravity_kernel(parent, jix, S, com_w, body_mass, gravity):
    nb = parent.shape[0]
    nv = S.shape[0]
    f = np.empty((nb, 6))
    for b in range(nb):
        m = body_mass[b]
        gx = m * gravity[0]
        gy = m * gravity[1]
        gz = m * gravity[2]
        cx = com_w[b, 0]
        cy = com_w[b, 1]
        cz = com_w[b, 2]
        f[b, 0] = -(cy * gz - cz * gy)
        f[b, 1] = -(cz * gx - cx * gz)
        f[b, 2] = -(cx * gy - cy * gx)
        f[b, 3] = -gx
        f[b, 4] = -gy
        f[b, 5] = -gz
    for b in range(nb - 1, 0, -1):
        pa = parent[b]
        for i in range(6):
            f[pa, i] += f[b, i]
    tau = np.empty(nv)
    for i in range(6):
        acc = 0.0
        for c in range(6):
            acc += S[i, c] * f[0, c]
        tau[i] = acc
    for b in range(1, nb):
        row = 6 + jix[b]
        acc = 0.0
        for c in range(6):
            acc += S[row, c] * f[b, c]
        tau[row] = acc
    return tau
