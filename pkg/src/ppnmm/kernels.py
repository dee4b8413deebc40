"""Compiled batched reflective-leapfrog trajectories for the Gibbs blocks.

These kernels replicate, per sub-chain, exactly the trajectory computed by
``chmc.constrained_leapfrog`` driven by the reference potentials in
``model``; the test suite asserts the agreement.  All randomness (initial
momenta, trajectory lengths, acceptance uniforms) is drawn by the caller
beforehand, so results are independent of the number of worker threads:
each sub-chain only reads shared inputs and writes its own output slots.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import NumbaWarning, njit, prange

# The TBB version probe warns on hosts with an older TBB; the fallback
# threading layer is fine for these kernels.
warnings.filterwarnings("ignore", message=".*TBB.*", category=NumbaWarning)

NUDGE = 1e-12


@njit(cache=True)
def _fold(q, p, lo, hi):
    width = hi - lo
    y = (q - lo) % (2.0 * width)
    if y > width:
        q_new = lo + 2.0 * width - y
        p_new = -p
    else:
        q_new = lo + y
        p_new = p
    if q_new <= lo:
        q_new = lo + NUDGE
    elif q_new >= hi:
        q_new = hi - NUDGE
    return q_new, p_new


@njit(cache=True)
def _latent_u(z, y_n, m, b_n, inv_sig2, a):
    rm1 = z.shape[0]
    r = rm1 + 1
    cp = 1.0
    for i in range(rm1):
        a[i] = cp * (1.0 - z[i])
        cp *= z[i]
    a[r - 1] = cp
    quad = 0.0
    for l in range(y_n.shape[0]):
        s = 0.0
        for j in range(r):
            s += m[l, j] * a[j]
        x = s + b_n * s * s
        d = y_n[l] - x
        quad += d * d * inv_sig2[l]
    u = 0.5 * quad
    for i in range(rm1):
        u -= (r - (i + 1) - 1) * np.log(z[i])
    return u


@njit(cache=True)
def _latent_grad(z, y_n, m, b_n, inv_sig2, a, grad_a, out):
    rm1 = z.shape[0]
    r = rm1 + 1
    cp = 1.0
    for i in range(rm1):
        a[i] = cp * (1.0 - z[i])
        cp *= z[i]
    a[r - 1] = cp
    for j in range(r):
        grad_a[j] = 0.0
    for l in range(y_n.shape[0]):
        s = 0.0
        for j in range(r):
            s += m[l, j] * a[j]
        x = s + b_n * s * s
        f = (1.0 + 2.0 * b_n * s) * (y_n[l] - x) * inv_sig2[l]
        for j in range(r):
            grad_a[j] -= m[l, j] * f
    suffix = 0.0
    for i in range(rm1 - 1, -1, -1):
        suffix += grad_a[i + 1] * a[i + 1]
        out[i] = grad_a[i] * a[i] / (z[i] - 1.0) + suffix / z[i] \
            - (r - (i + 1) - 1) / z[i]


@njit(cache=True, parallel=True)
def latent_block(zt, yt, m, b, inv_sig2, eps, nlf, p0, out_zt, out_dh, out_div):
    """One trajectory per pixel for the stick-breaking coordinates.

    zt, p0, out_zt: (N, R-1); yt: (N, L); out_dh holds H* - H (inf when the
    trajectory diverged).  Candidates are returned for every pixel; the
    caller applies the accept/reject decision.
    """
    n_pix, rm1 = zt.shape
    for n in prange(n_pix):
        z = zt[n].copy()
        p = p0[n].copy()
        a = np.empty(rm1 + 1)
        grad_a = np.empty(rm1 + 1)
        g = np.empty(rm1)
        k0 = 0.0
        for d in range(rm1):
            k0 += p[d] * p[d]
        u0 = _latent_u(z, yt[n], m, b[n], inv_sig2, a)
        _latent_grad(z, yt[n], m, b[n], inv_sig2, a, grad_a, g)
        ok = True
        for d in range(rm1):
            if not np.isfinite(g[d]):
                ok = False
        if ok:
            for _ in range(nlf[n]):
                for d in range(rm1):
                    p[d] -= 0.5 * eps * g[d]
                    zc, pc = _fold(z[d] + eps * p[d], p[d], 0.0, 1.0)
                    z[d] = zc
                    p[d] = pc
                _latent_grad(z, yt[n], m, b[n], inv_sig2, a, grad_a, g)
                for d in range(rm1):
                    p[d] -= 0.5 * eps * g[d]
                    if not (np.isfinite(z[d]) and np.isfinite(p[d]) and np.isfinite(g[d])):
                        ok = False
                if not ok:
                    break
        if ok:
            k1 = 0.0
            for d in range(rm1):
                k1 += p[d] * p[d]
            u1 = _latent_u(z, yt[n], m, b[n], inv_sig2, a)
            dh = (u1 + 0.5 * k1) - (u0 + 0.5 * k0)
        else:
            dh = np.inf
        if np.isfinite(dh):
            out_dh[n] = dh
            out_div[n] = False
            for d in range(rm1):
                out_zt[n, d] = z[d]
        else:
            out_dh[n] = np.inf
            out_div[n] = True
            for d in range(rm1):
                out_zt[n, d] = zt[n, d]


@njit(cache=True)
def _row_v(m_row, y_row, at, b, inv_sl2, mbar_row, inv_s2):
    n_pix, r = at.shape
    quad = 0.0
    for n in range(n_pix):
        u = 0.0
        for j in range(r):
            u += at[n, j] * m_row[j]
        t = u + b[n] * u * u
        d = y_row[n] - t
        quad += d * d
    v = 0.5 * quad * inv_sl2
    for j in range(r):
        dm = m_row[j] - mbar_row[j]
        v += 0.5 * dm * dm * inv_s2
    return v


@njit(cache=True)
def _row_grad(m_row, y_row, at, b, inv_sl2, mbar_row, inv_s2, out):
    n_pix, r = at.shape
    for j in range(r):
        out[j] = (m_row[j] - mbar_row[j]) * inv_s2
    for n in range(n_pix):
        u = 0.0
        for j in range(r):
            u += at[n, j] * m_row[j]
        t = u + b[n] * u * u
        f = (1.0 + 2.0 * b[n] * u) * (y_row[n] - t) * inv_sl2
        for j in range(r):
            out[j] -= at[n, j] * f


@njit(cache=True, parallel=True)
def endmember_block(m0, y, at, b, sigma2, s2, mbar, eps, nlf, p0, out_m, out_dh, out_div):
    """One trajectory per endmember row (spectral band).

    m0, p0, out_m: (L, R); y: (L, N) with contiguous rows; at: (N, R).
    """
    n_bands, r = m0.shape
    inv_s2 = 1.0 / s2
    for l in prange(n_bands):
        q = m0[l].copy()
        p = p0[l].copy()
        g = np.empty(r)
        inv_sl2 = 1.0 / sigma2[l]
        k0 = 0.0
        for d in range(r):
            k0 += p[d] * p[d]
        v0 = _row_v(q, y[l], at, b, inv_sl2, mbar[l], inv_s2)
        _row_grad(q, y[l], at, b, inv_sl2, mbar[l], inv_s2, g)
        ok = True
        for d in range(r):
            if not np.isfinite(g[d]):
                ok = False
        if ok:
            for _ in range(nlf[l]):
                for d in range(r):
                    p[d] -= 0.5 * eps * g[d]
                    qc, pc = _fold(q[d] + eps * p[d], p[d], 0.0, 1.0)
                    q[d] = qc
                    p[d] = pc
                _row_grad(q, y[l], at, b, inv_sl2, mbar[l], inv_s2, g)
                for d in range(r):
                    p[d] -= 0.5 * eps * g[d]
                    if not (np.isfinite(q[d]) and np.isfinite(p[d]) and np.isfinite(g[d])):
                        ok = False
                if not ok:
                    break
        if ok:
            k1 = 0.0
            for d in range(r):
                k1 += p[d] * p[d]
            v1 = _row_v(q, y[l], at, b, inv_sl2, mbar[l], inv_s2)
            dh = (v1 + 0.5 * k1) - (v0 + 0.5 * k0)
        else:
            dh = np.inf
        if np.isfinite(dh):
            out_dh[l] = dh
            out_div[l] = False
            for d in range(r):
                out_m[l, d] = q[d]
        else:
            out_dh[l] = np.inf
            out_div[l] = True
            for d in range(r):
                out_m[l, d] = m0[l, d]
