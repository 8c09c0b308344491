"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Both implementations run the same algorithms; this one is used when the
extension is not built or when OFDMA_RANGING_PURE_PYTHON is set.
"""

import math

import numpy as np


def jacobi_evd(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Returns ``(w, v, sweeps)`` with eigenvalues ``w`` sorted in descending
    order and orthonormal eigenvectors in the columns of ``v``.
    """
    A = np.array(a, dtype=np.complex128, copy=True)
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    norm = math.sqrt(float(np.sum(A.real**2 + A.imag**2)))
    sweeps = 0
    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p, q].real ** 2 + A[p, q].imag ** 2
        if math.sqrt(off) <= tol * norm:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = complex(A[p, q])
                g = abs(apq)
                if g == 0.0:
                    continue
                e = apq / g
                tau = (A[q, q].real - A[p, p].real) / (2.0 * g)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                se = s * e
                sec = se.conjugate()
                # columns: A <- A G
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = c * colp - sec * colq
                A[:, q] = se * colp + c * colq
                # rows: A <- G^H A
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = c * rowp - se * rowq
                A[q, :] = sec * rowp + c * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - sec * vq
                V[:, q] = se * vp + c * vq
    w = A.diagonal().real.copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order], sweeps


def music_scan(un, codes, phasors, floor=1e-30):
    """Grid maximisation of 1/||Un^H diag(phasor) c||^2 for every code.

    ``un`` is M x D, ``codes`` is n_codes x M and ``phasors`` is G x M.
    Returns (index of the first maximiser, peak value) per code.
    """
    un = np.asarray(un)
    steer = np.asarray(codes)[:, None, :] * np.asarray(phasors)[None, :, :]
    proj = steer @ un.conj()
    den = np.sum(proj.real**2 + proj.imag**2, axis=2)
    np.maximum(den, floor, out=den)
    metric = 1.0 / den
    idx = np.argmax(metric, axis=1)
    return idx, metric[np.arange(metric.shape[0]), idx]
