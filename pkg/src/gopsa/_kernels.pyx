# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the whiten -> eigh -> log inner loop.

Each routine processes a stack of small SPD matrices with a single
congruence ``W X W`` (``W`` symmetric), one eigendecomposition per matrix
(cyclic Jacobi for small ``d``, LAPACK ``dsyev`` above that) and no
temporaries beyond a per-call workspace.
"""

import numpy as np

from libc.math cimport fabs, log, sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dsyev

from .exceptions import NotPositiveDefinite

BACKEND = "cython"


cdef int JACOBI_MAX_DIM = 5
cdef int JACOBI_MAX_SWEEPS = 60


cdef int _jacobi(double* A, double* V, double* w, int d) noexcept nogil:
    # cyclic Jacobi on row-major symmetric A; rows of V become eigenvectors
    cdef int p, q, r, sweep
    cdef double off, scale, apq, theta, t, c, s, tau, app, aqq, arp, arq, vpr, vqr
    for p in range(d):
        for q in range(d):
            V[p * d + q] = 1.0 if p == q else 0.0
    for sweep in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        scale = 0.0
        for p in range(d):
            scale = scale + A[p * d + p] * A[p * d + p]
            for q in range(p + 1, d):
                off = off + A[p * d + q] * A[p * d + q]
        if off == 0.0 or off <= 1e-30 * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p * d + q]
                app = A[p * d + p]
                aqq = A[q * d + q]
                # element negligible against both diagonal entries
                if fabs(app) + 1e2 * fabs(apq) == fabs(app) and \
                        fabs(aqq) + 1e2 * fabs(apq) == fabs(aqq):
                    A[p * d + q] = 0.0
                    A[q * d + p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                A[p * d + p] = app - t * apq
                A[q * d + q] = aqq + t * apq
                A[p * d + q] = 0.0
                A[q * d + p] = 0.0
                for r in range(d):
                    if r != p and r != q:
                        arp = A[r * d + p]
                        arq = A[r * d + q]
                        A[r * d + p] = arp - s * (arq + tau * arp)
                        A[p * d + r] = A[r * d + p]
                        A[r * d + q] = arq + s * (arp - tau * arq)
                        A[q * d + r] = A[r * d + q]
                    vpr = V[p * d + r]
                    vqr = V[q * d + r]
                    V[p * d + r] = vpr - s * (vqr + tau * vpr)
                    V[q * d + r] = vqr + s * (vpr - tau * vqr)
    else:
        return 1
    for p in range(d):
        w[p] = A[p * d + p]
    return 0


cdef int _whitened_eig(const double[:, ::1] X, const double[:, ::1] W, int d,
                       double* tmp, double* C, double* w,
                       double* work, int lwork) noexcept nogil:
    cdef int i, j, k, info = 0
    cdef double s
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s = s + W[i, k] * X[k, j]
            tmp[i * d + j] = s
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s = s + tmp[i * d + k] * W[k, j]
            C[i * d + j] = s
    if d <= JACOBI_MAX_DIM:
        for i in range(d * d):
            tmp[i] = C[i]
        info = _jacobi(tmp, C, w, d)
        if info == 0:
            for k in range(d):
                if w[k] <= 0.0:
                    return 1
        return info
    # symmetric, so row-major == column-major; rows of C become eigenvectors
    dsyev(b"V", b"U", &d, C, &d, w, work, &lwork, &info)
    if info == 0 and w[0] <= 0.0:
        return 1
    return info


cdef int _workspace_size(int d):
    return max(1, 3 * d) + 64 * d


def whiten_logm_uvect(const double[:, :, ::1] X, const double[:, ::1] W,
                      double[:, ::1] out):
    """Write ``uvect(log(W X[n] W))`` into ``out[n]`` for every ``n``."""
    cdef int n_mat = X.shape[0]
    cdef int d = X.shape[1]
    cdef int lwork = _workspace_size(d)
    cdef int n, i, j, k, col, info = 0, bad = -1
    cdef double s
    cdef double sqrt2 = sqrt(2.0)
    cdef double* buf = <double*> malloc(sizeof(double) * (2 * d * d + 2 * d + lwork))
    if buf == NULL:
        raise MemoryError()
    cdef double* tmp = buf
    cdef double* C = buf + d * d
    cdef double* w = buf + 2 * d * d
    cdef double* lw = buf + 2 * d * d + d
    cdef double* work = buf + 2 * d * d + 2 * d
    try:
        with nogil:
            for n in range(n_mat):
                info = _whitened_eig(X[n], W, d, tmp, C, w, work, lwork)
                if info != 0:
                    bad = n
                    break
                for k in range(d):
                    lw[k] = log(w[k])
                col = 0
                for i in range(d):
                    for j in range(i, d):
                        s = 0.0
                        for k in range(d):
                            s = s + C[k * d + i] * C[k * d + j] * lw[k]
                        if i == j:
                            out[n, col] = s
                        else:
                            out[n, col] = sqrt2 * s
                        col = col + 1
    finally:
        free(buf)
    if bad >= 0:
        raise NotPositiveDefinite(f"whitened matrix {bad} is not positive definite")


def whiten_logm(const double[:, :, ::1] X, const double[:, ::1] W,
                double[:, :, ::1] out):
    """Write ``log(W X[n] W)`` into ``out[n]`` for every ``n``."""
    cdef int n_mat = X.shape[0]
    cdef int d = X.shape[1]
    cdef int lwork = _workspace_size(d)
    cdef int n, i, j, k, info = 0, bad = -1
    cdef double s
    cdef double* buf = <double*> malloc(sizeof(double) * (2 * d * d + 2 * d + lwork))
    if buf == NULL:
        raise MemoryError()
    cdef double* tmp = buf
    cdef double* C = buf + d * d
    cdef double* w = buf + 2 * d * d
    cdef double* lw = buf + 2 * d * d + d
    cdef double* work = buf + 2 * d * d + 2 * d
    try:
        with nogil:
            for n in range(n_mat):
                info = _whitened_eig(X[n], W, d, tmp, C, w, work, lwork)
                if info != 0:
                    bad = n
                    break
                for k in range(d):
                    lw[k] = log(w[k])
                for i in range(d):
                    for j in range(i, d):
                        s = 0.0
                        for k in range(d):
                            s = s + C[k * d + i] * C[k * d + j] * lw[k]
                        out[n, i, j] = s
                        out[n, j, i] = s
    finally:
        free(buf)
    if bad >= 0:
        raise NotPositiveDefinite(f"whitened matrix {bad} is not positive definite")
