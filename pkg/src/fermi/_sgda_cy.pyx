# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGDA inner loop.

Same contract and update equations as fermi._sgda_py.run_segment (which is
the authoritative reference); plain C loops instead of vectorized numpy, so
the two backends agree to rounding but not bitwise. Compiled without
-ffast-math: IEEE semantics are part of the determinism contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, exp, log, sqrt

cnp.import_array()

ctypedef cnp.int64_t i64

cdef double PROB_FLOOR = 1e-300


def run_segment(double[:, ::1] X, i64[::1] labels, i64[::1] fclass,
                i64[::1] s_codes, double[:, ::1] weights, double[::1] bias,
                double[:, :, ::1] critic, double[:, ::1] scales,
                i64[::1] batches, i64[::1] batch_sizes,
                double eta_theta, double eta_w, double lam, double radius,
                double[::1] loss_out, double[::1] psi_out):
    cdef Py_ssize_t n_iter = batch_sizes.shape[0]
    cdef Py_ssize_t m = weights.shape[0]
    cdef Py_ssize_t d = weights.shape[1]
    cdef Py_ssize_t n_blocks = critic.shape[0]
    cdef Py_ssize_t k = critic.shape[1]

    f_buf = np.empty(m)
    g_buf = np.empty(m)
    gw_buf = np.empty((m, d))
    gb_buf = np.empty(m)
    gwf_buf = np.empty((m, d))
    gbf_buf = np.empty(m)
    cn_buf = np.empty((n_blocks, m))
    fsum_buf = np.empty((n_blocks, m))
    cacc_buf = np.empty((n_blocks, k, m))
    touched_buf = np.empty(n_blocks, dtype=np.int64)
    cdef double[::1] f = f_buf
    cdef double[::1] g = g_buf
    cdef double[:, ::1] gw = gw_buf
    cdef double[::1] gb = gb_buf
    cdef double[:, ::1] gwf = gwf_buf
    cdef double[::1] gbf = gbf_buf
    cdef double[:, ::1] cn = cn_buf
    cdef double[:, ::1] fsum = fsum_buf
    cdef double[:, :, ::1] cacc = cacc_buf
    cdef i64[::1] touched = touched_buf

    cdef Py_ssize_t pos = 0, t, a, i, j, c, r, q, y, b
    cdef Py_ssize_t nobs, nrel
    cdef int skipped = 0
    cdef double zmax, zsum, v, h, fg, sc, py
    cdef double loss, psisum, coef_l, coef_f, coef_w, nrm

    for t in range(n_iter):
        b = batch_sizes[t]

        nobs = 0
        if lam != 0.0:
            for a in range(b):
                if s_codes[batches[pos + a]] >= 0:
                    nobs += 1
            if nobs > 0:
                for c in range(n_blocks):
                    touched[c] = 0
                    for j in range(m):
                        v = 0.0
                        for r in range(k):
                            v += critic[c, r, j] * critic[c, r, j]
                        cn[c, j] = v
                        fsum[c, j] = 0.0
                        for r in range(k):
                            cacc[c, r, j] = 0.0

        for j in range(m):
            gb[j] = 0.0
            gbf[j] = 0.0
            for q in range(d):
                gw[j, q] = 0.0
                gwf[j, q] = 0.0

        loss = 0.0
        psisum = 0.0
        nrel = 0
        for a in range(b):
            i = batches[pos + a]
            zmax = -1e308
            for j in range(m):
                v = bias[j]
                for q in range(d):
                    v += weights[j, q] * X[i, q]
                f[j] = v
                if v > zmax:
                    zmax = v
            zsum = 0.0
            for j in range(m):
                f[j] = exp(f[j] - zmax)
                zsum += f[j]
            for j in range(m):
                f[j] = f[j] / zsum

            y = labels[i]
            py = f[y]
            if py < PROB_FLOOR:
                py = PROB_FLOOR
            loss += -log(py)
            for j in range(m):
                h = f[j]
                if j == y:
                    h -= 1.0
                gb[j] += h
                for q in range(d):
                    gw[j, q] += h * X[i, q]

            if lam != 0.0 and nobs > 0 and s_codes[i] >= 0 and fclass[i] >= 0:
                c = fclass[i]
                r = s_codes[i]
                sc = scales[c, r]
                fg = 0.0
                for j in range(m):
                    g[j] = -cn[c, j] + 2.0 * sc * critic[c, r, j]
                    fg += f[j] * g[j]
                psisum += fg - 1.0
                nrel += 1
                for j in range(m):
                    h = f[j] * (g[j] - fg)
                    gbf[j] += h
                    for q in range(d):
                        gwf[j, q] += h * X[i, q]
                touched[c] = 1
                for j in range(m):
                    fsum[c, j] += f[j]
                    cacc[c, r, j] += sc * f[j]

        loss_out[t] = loss / b
        coef_l = eta_theta / b
        for j in range(m):
            bias[j] -= coef_l * gb[j]
            for q in range(d):
                weights[j, q] -= coef_l * gw[j, q]

        if lam == 0.0:
            psi_out[t] = NAN
        elif nobs == 0:
            psi_out[t] = NAN
            skipped += 1
        else:
            if nrel == 0:
                psi_out[t] = 0.0
            else:
                psi_out[t] = psisum / nobs
                coef_f = eta_theta * lam / nobs
                for j in range(m):
                    bias[j] -= coef_f * gbf[j]
                    for q in range(d):
                        weights[j, q] -= coef_f * gwf[j, q]
                coef_w = 2.0 * eta_w * lam / nobs
                for c in range(n_blocks):
                    if touched[c] == 0:
                        continue
                    for r in range(k):
                        for j in range(m):
                            critic[c, r, j] += coef_w * (
                                cacc[c, r, j] - critic[c, r, j] * fsum[c, j]
                            )
                    if radius > 0.0:
                        nrm = 0.0
                        for r in range(k):
                            for j in range(m):
                                nrm += critic[c, r, j] * critic[c, r, j]
                        nrm = sqrt(nrm)
                        if nrm > radius:
                            v = radius / nrm
                            for r in range(k):
                                for j in range(m):
                                    critic[c, r, j] *= v
        pos += b
    return skipped
