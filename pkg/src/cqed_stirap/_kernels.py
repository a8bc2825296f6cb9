"""Compiled inner loops: mean-field RK4, Benettin resets, Chebyshev steps.

Mean-field vectors are 9 reals: Re/Im of a, b, c, s^- followed by s_z.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def mf_rhs(y, J1, J2, delta, g, out):
    ar, ai, br, bi, cr, ci, sr, si, sz = y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8]
    # i da/dt = -J1 b
    out[0] = -J1 * bi
    out[1] = J1 * br
    # i db/dt = delta b - J1 a - J2 c
    wr = delta * br - J1 * ar - J2 * cr
    wi = delta * bi - J1 * ai - J2 * ci
    out[2] = wi
    out[3] = -wr
    # i dc/dt = g s - J2 b
    ur = g * sr - J2 * br
    ui = g * si - J2 * bi
    out[4] = ui
    out[5] = -ur
    # i ds/dt = -2 g c s_z
    out[6] = -2.0 * g * sz * ci
    out[7] = 2.0 * g * sz * cr
    # ds_z/dt = 2 g Im(c conj(s))
    out[8] = 2.0 * g * (ci * sr - cr * si)


@njit(cache=True, nogil=True)
def rk4_run(y, J1, J2, delta, g, h, nsteps):
    n = y.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for _ in range(nsteps):
        mf_rhs(y, J1, J2, delta, g, k1)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        mf_rhs(tmp, J1, J2, delta, g, k2)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        mf_rhs(tmp, J1, J2, delta, g, k3)
        for i in range(n):
            tmp[i] = y[i] + h * k3[i]
        mf_rhs(tmp, J1, J2, delta, g, k4)
        for i in range(n):
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return y


@njit(cache=True)
def rk4_trajectory(y, J1, J2, delta, g, h, steps_per_sample, nsamples):
    out = np.empty((nsamples + 1, y.shape[0]))
    out[0] = y
    for k in range(nsamples):
        rk4_run(y, J1, J2, delta, g, h, steps_per_sample)
        out[k + 1] = y
    return out


@njit(cache=True, nogil=True)
def benettin(ref, test, J1, J2, delta, g, h, steps_per_reset, M, delta0):
    """Return log(delta_j / delta0) for j = 1..M.

    The separation is measured on the first 8 coordinates; after each
    interval the whole displacement (s_z included) is rescaled so that the
    measured separation is delta0 again.
    """
    logs = np.empty(M)
    for j in range(M):
        rk4_run(ref, J1, J2, delta, g, h, steps_per_reset)
        rk4_run(test, J1, J2, delta, g, h, steps_per_reset)
        dist2 = 0.0
        for i in range(8):
            d = test[i] - ref[i]
            dist2 += d * d
        dist = np.sqrt(dist2)
        if not np.isfinite(dist) or dist == 0.0:
            logs[j] = np.nan
            return logs
        logs[j] = np.log(dist / delta0)
        scale = delta0 / dist
        for i in range(9):
            test[i] = ref[i] + (test[i] - ref[i]) * scale
    return logs


@njit(cache=True, nogil=True)
def _csr_accumulate(indptr, indices, data, alpha, x, out):
    for row in range(indptr.shape[0] - 1):
        acc = 0.0 + 0.0j
        for p in range(indptr[row], indptr[row + 1]):
            acc += data[p] * x[indices[p]]
        out[row] += alpha * acc


@njit(cache=True, nogil=True)
def chebyshev_steps(psi, p0, i0, d0, p1, i1, d1, p2, i2, d2, c1s, c2s, coeffs, e0, R):
    """Apply exp(-i H_k h) for each k, with H_k = H0 + c1s[k] M1 + c2s[k] M2.

    ``coeffs`` are the Chebyshev coefficients of exp(-i h x) on the window
    [e0 - R, e0 + R] (phase factor included); they are shared by all steps.
    """
    n = psi.shape[0]
    v0 = np.empty(n, dtype=np.complex128)
    v1 = np.empty(n, dtype=np.complex128)
    v2 = np.empty(n, dtype=np.complex128)
    acc = np.empty(n, dtype=np.complex128)
    nterms = coeffs.shape[0]
    inv_r = 1.0 / R
    for k in range(c1s.shape[0]):
        a1 = c1s[k]
        a2 = c2s[k]
        for i in range(n):
            v0[i] = psi[i]
        # v1 = Ht v0 with Ht = (H - e0)/R
        for i in range(n):
            v1[i] = -e0 * v0[i]
        _csr_accumulate(p0, i0, d0, 1.0, v0, v1)
        _csr_accumulate(p1, i1, d1, a1, v0, v1)
        _csr_accumulate(p2, i2, d2, a2, v0, v1)
        for i in range(n):
            v1[i] *= inv_r
            acc[i] = coeffs[0] * v0[i] + coeffs[1] * v1[i]
        for m in range(2, nterms):
            for i in range(n):
                v2[i] = -e0 * v1[i]
            _csr_accumulate(p0, i0, d0, 1.0, v1, v2)
            _csr_accumulate(p1, i1, d1, a1, v1, v2)
            _csr_accumulate(p2, i2, d2, a2, v1, v2)
            cm = coeffs[m]
            for i in range(n):
                v2[i] = 2.0 * inv_r * v2[i] - v0[i]
                acc[i] += cm * v2[i]
                v0[i] = v1[i]
                v1[i] = v2[i]
        for i in range(n):
            psi[i] = acc[i]
    return psi
