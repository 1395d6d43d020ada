"""Compiled residual and Jacobian of the classical-machine network DAE.

These mirror :meth:`PowerDae.stacked_numpy` and :meth:`PowerDae.jacobian_numpy`
term by term; the numpy versions stay as the reference implementation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# load_kind codes
CONSTANT_POWER = 0
CONSTANT_IMPEDANCE = 1


@njit(cache=True, nogil=True)
def _load_scale(vk, load_kind, vref_k, vmin):
    if load_kind == CONSTANT_IMPEDANCE:
        r = vk / vref_k
        return r * r, 2.0 * vk / (vref_k * vref_k)
    if vk < vmin:
        r = vk / vmin
        return r * r, 2.0 * vk / (vmin * vmin)
    return 1.0, 0.0


@njit(cache=True, nogil=True)
def residual(y, z, u, gb, E_xd, inv_xd, omega_s, Pm, ctrl, D, inv_H2,
             G, B, P0, Q0, has_load, load_kind, vref, vmin,
             fixed_slack, slack_theta, slack_v):
    ng = gb.shape[0]
    nb = G.shape[0]
    out = np.empty(2 * (ng + nb))
    re = np.empty(nb)
    im = np.empty(nb)
    for k in range(nb):
        re[k] = z[nb + k] * np.cos(z[k])
        im[k] = z[nb + k] * np.sin(z[k])
    for i in range(nb):
        ir = 0.0
        ii = 0.0
        for k in range(nb):
            g = G[i, k]
            b = B[i, k]
            ir += g * re[k] - b * im[k]
            ii += b * re[k] + g * im[k]
        p = re[i] * ir + im[i] * ii
        q = im[i] * ir - re[i] * ii
        if has_load:
            s, _ = _load_scale(z[nb + i], load_kind, vref[i], vmin)
            p += P0[i] * s
            q += Q0[i] * s
        out[2 * ng + i] = p
        out[2 * ng + nb + i] = q
    for j in range(ng):
        k = gb[j]
        w = y[ng + j] - 1.0
        vg = z[nb + k]
        a = y[j] - z[k]
        ev = E_xd[j] * vg
        pe = ev * np.sin(a)
        qg = ev * np.cos(a) - vg * vg * inv_xd[j]
        out[j] = omega_s * w
        out[ng + j] = (Pm[j] + u * ctrl[j] - pe - D[j] * w) * inv_H2[j]
        out[2 * ng + k] -= pe
        out[2 * ng + nb + k] -= qg
    if fixed_slack >= 0:
        out[2 * ng + fixed_slack] = z[fixed_slack] - slack_theta
        out[2 * ng + nb + fixed_slack] = z[nb + fixed_slack] - slack_v
    return out


@njit(cache=True, nogil=True)
def jacobian(y, z, gb, E_xd, inv_xd, omega_s, D, inv_H2, Y,
             P0, Q0, has_load, load_kind, vref, vmin, fixed_slack):
    ng = gb.shape[0]
    nb = Y.shape[0]
    fy = np.zeros((2 * ng, 2 * ng))
    fz = np.zeros((2 * ng, 2 * nb))
    gy = np.zeros((2 * nb, 2 * ng))
    gz = np.empty((2 * nb, 2 * nb))

    V = np.empty(nb, dtype=np.complex128)
    Vn = np.empty(nb, dtype=np.complex128)
    for k in range(nb):
        Vn[k] = np.cos(z[k]) + 1j * np.sin(z[k])
        V[k] = z[nb + k] * Vn[k]
    for i in range(nb):
        I = 0.0j
        for k in range(nb):
            I += Y[i, k] * V[k]
        cI = np.conj(I)
        for k in range(nb):
            dth = -1j * V[i] * np.conj(Y[i, k] * V[k])
            dvm = V[i] * np.conj(Y[i, k] * Vn[k])
            if k == i:
                dth += 1j * V[i] * cI
                dvm += cI * Vn[i]
            gz[i, k] = dth.real
            gz[i, nb + k] = dvm.real
            gz[nb + i, k] = dth.imag
            gz[nb + i, nb + k] = dvm.imag
        if has_load:
            _, ds = _load_scale(z[nb + i], load_kind, vref[i], vmin)
            gz[i, nb + i] += P0[i] * ds
            gz[nb + i, nb + i] += Q0[i] * ds

    for j in range(ng):
        k = gb[j]
        vg = z[nb + k]
        a = y[j] - z[k]
        sa = np.sin(a)
        ca = np.cos(a)
        dpe_dd = E_xd[j] * vg * ca
        dpe_dv = E_xd[j] * sa
        dqg_dd = -E_xd[j] * vg * sa
        dqg_dv = E_xd[j] * ca - 2.0 * vg * inv_xd[j]
        fy[j, ng + j] = omega_s
        fy[ng + j, j] = -dpe_dd * inv_H2[j]
        fy[ng + j, ng + j] = -D[j] * inv_H2[j]
        fz[ng + j, k] = dpe_dd * inv_H2[j]
        fz[ng + j, nb + k] = -dpe_dv * inv_H2[j]
        gz[k, k] += dpe_dd
        gz[k, nb + k] -= dpe_dv
        gz[nb + k, k] += dqg_dd
        gz[nb + k, nb + k] -= dqg_dv
        gy[k, j] = -dpe_dd
        gy[nb + k, j] = -dqg_dd
    if fixed_slack >= 0:
        for row in (fixed_slack, nb + fixed_slack):
            for c in range(2 * nb):
                gz[row, c] = 0.0
            for c in range(2 * ng):
                gy[row, c] = 0.0
            gz[row, row] = 1.0
    return fy, fz, gy, gz
