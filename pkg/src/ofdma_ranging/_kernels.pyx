# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Hermitian Jacobi EVD and the MUSIC CFO grid scan."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def jacobi_evd(a, double tol=1e-14, int max_sweeps=100):
    cdef double complex[:, ::1] A = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t n = A.shape[0]
    vv = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] V = vv
    cdef Py_ssize_t p, q, k
    cdef double norm = 0.0, off, g, tau, t, c, s
    cdef double complex apq, e, se, sec, xp, xq
    cdef int sweeps = 0

    for p in range(n):
        for q in range(n):
            norm += cabs2(A[p, q])
    norm = sqrt(norm)

    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += cabs2(A[p, q])
        if sqrt(off) <= tol * norm:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = sqrt(cabs2(apq))
                if g == 0.0:
                    continue
                e = apq / g
                tau = (A[q, q].real - A[p, p].real) / (2.0 * g)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                se = s * e
                sec = se.conjugate()
                for k in range(n):
                    xp = A[k, p]
                    xq = A[k, q]
                    A[k, p] = c * xp - sec * xq
                    A[k, q] = se * xp + c * xq
                for k in range(n):
                    xp = A[p, k]
                    xq = A[q, k]
                    A[p, k] = c * xp - se * xq
                    A[q, k] = sec * xp + c * xq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                for k in range(n):
                    xp = V[k, p]
                    xq = V[k, q]
                    V[k, p] = c * xp - sec * xq
                    V[k, q] = se * xp + c * xq

    w = np.empty(n)
    for p in range(n):
        w[p] = A[p, p].real
    order = np.argsort(-w, kind="stable")
    return w[order], vv[:, order], sweeps


def music_scan(un, codes, phasors, double floor=1e-30):
    cdef const double complex[:, ::1] P = np.ascontiguousarray(phasors, dtype=np.complex128)
    # W[k, d, m] = conj(U[m, d]) * c_k(m), so each grid point costs one product per term
    w = np.ascontiguousarray(
        np.conj(np.asarray(un, dtype=np.complex128)).T[None, :, :] * np.asarray(codes)[:, None, :],
        dtype=np.complex128,
    )
    cdef const double complex[:, :, ::1] W = w
    cdef Py_ssize_t n_codes = W.shape[0], D = W.shape[1], M = W.shape[2], G = P.shape[0]
    cdef Py_ssize_t k, gi, d, m, best_g
    cdef double den, val, best, re, im, wr, wi, pr, pi_
    idx = np.empty(n_codes, dtype=np.intp)
    peak = np.empty(n_codes, dtype=np.float64)
    cdef Py_ssize_t[::1] idx_v = idx
    cdef double[::1] peak_v = peak

    # explicit real arithmetic: C complex products go through __muldc3 otherwise
    with nogil:
        for k in range(n_codes):
            best = -1.0
            best_g = 0
            for gi in range(G):
                den = 0.0
                for d in range(D):
                    re = 0.0
                    im = 0.0
                    for m in range(M):
                        wr = W[k, d, m].real
                        wi = W[k, d, m].imag
                        pr = P[gi, m].real
                        pi_ = P[gi, m].imag
                        re = re + wr * pr - wi * pi_
                        im = im + wr * pi_ + wi * pr
                    den += re * re + im * im
                if den < floor:
                    den = floor
                val = 1.0 / den
                if val > best:
                    best = val
                    best_g = gi
            idx_v[k] = best_g
            peak_v[k] = best
    return idx, peak
