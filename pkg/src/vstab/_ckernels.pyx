# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled congruence fixed-point kernel.

Same contract as ``vstab._pykernels.congruence_iterate``; the whole loop
runs without the GIL and calls LAPACK/BLAS through scipy's Cython bindings.
"""
import numpy as np

from libc.math cimport sqrt, fabs, exp, log
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport zgemm, zherk
from scipy.linalg.cython_lapack cimport zheevd

cdef enum:
    CONVERGED = 0
    MAX_ITER = 1
    EIG_FAILED = 2
    RATE_WINDOW = 16


cdef inline void _rate(double *tr, Py_ssize_t k, double *rho, bint *plateau) noexcept nogil:
    # see the pure-Python kernel for the estimate's rationale
    cdef Py_ssize_t i, j, m = RATE_WINDOW
    cdef double acc = 0.0, r, best
    if k >= 2 * m:
        for i in range(k - m, k):
            acc += log(tr[i]) - log(tr[i - m])
        rho[0] = exp(acc / (m * m))
        plateau[0] = rho[0] >= 1.0
        return
    plateau[0] = False
    best = 1.0 if k < 2 else 0.0
    j = k - 4 if k - 4 > 1 else 1
    for i in range(j, k):
        r = tr[i] / tr[i - 1]
        if r > best:
            best = r
    rho[0] = best


def congruence_iterate(M, Q0, double a, double b, double c, double d,
                       double tol, Py_ssize_t max_iter, bint relative=True,
                       bint rate_aware=True, bint averaged=False):
    cdef int n = M.shape[0]
    Mf = np.array(M, dtype=np.complex128, order="F")
    Qh = np.asarray(Q0, dtype=np.complex128)
    Qa_arr = np.asfortranarray(0.5 * (Qh + Qh.conj().T))
    Qb_arr = np.zeros((n, n), dtype=np.complex128, order="F")
    U_arr = np.empty((n, n), dtype=np.complex128, order="F")
    C_arr = np.empty((n, n), dtype=np.complex128, order="F")
    w_arr = np.empty(n, dtype=np.float64)
    s_arr = np.empty(n, dtype=np.float64)
    trace_arr = np.empty(max(max_iter, 1), dtype=np.float64)

    cdef double complex[::1, :] mv = Mf
    cdef double complex[::1, :] qa = Qa_arr
    cdef double complex[::1, :] qb = Qb_arr
    cdef double complex[::1, :] uv = U_arr
    cdef double complex[::1, :] cv = C_arr
    cdef double[::1] wv = w_arr
    cdef double[::1] sv = s_arr
    cdef double[::1] tr = trace_arr

    cdef double complex *m = &mv[0, 0]
    cdef double *trp = &tr[0]
    cdef double complex *qcur = &qa[0, 0]
    cdef double complex *qnew = &qb[0, 0]
    cdef double complex *tmp
    cdef double complex *u = &uv[0, 0]
    cdef double complex *cm = &cv[0, 0]
    cdef double *w = &wv[0]
    cdef double *s = &sv[0]

    # workspace query
    cdef int info = 0, lwork = -1, lrwork = -1, liwork = -1
    cdef double complex wkopt
    cdef double rwkopt
    cdef int iwkopt
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef char tc = b'C'
    cdef char tn = b'N'
    zheevd(&jobz, &uplo, &n, u, &n, w, &wkopt, &lwork, &rwkopt, &lrwork, &iwkopt, &liwork, &info)
    lwork = <int>wkopt.real + 1
    lrwork = <int>rwkopt + 1
    liwork = iwkopt + 1
    work_arr = np.empty(lwork, dtype=np.complex128)
    rwork_arr = np.empty(lrwork, dtype=np.float64)
    iwork_arr = np.empty(liwork, dtype=np.intc)
    cdef double complex[::1] workv = work_arr
    cdef double[::1] rworkv = rwork_arr
    cdef int[::1] iworkv = iwork_arr
    cdef double complex *work = &workv[0]
    cdef double *rwork = &rworkv[0]
    cdef int *iwork = &iworkv[0]

    cdef double complex zone = 1.0
    cdef double complex zzero = 0.0
    cdef double done = 1.0
    cdef double dzero = 0.0
    cdef Py_ssize_t nn = <Py_ssize_t>n * n
    cdef Py_ssize_t i, j, k = 0
    cdef int status = MAX_ITER
    cdef double q, h, scale, change, prev = 1e308, rho, acc, re, im
    cdef double complex diff
    cdef bint plateau
    cdef double tiny = 2.2250738585072014e-308
    # relative changes below this are roundoff in an n x n Frobenius norm
    cdef double floor = 4.0 * 2.220446049250313e-16 * n if relative else 0.0

    with nogil:
        while k < max_iter:
            memcpy(u, qcur, nn * sizeof(double complex))
            zheevd(&jobz, &uplo, &n, u, &n, w, work, &lwork, rwork, &lrwork, iwork, &liwork, &info)
            if info != 0:
                status = EIG_FAILED
                break
            for i in range(n):
                q = w[i] if w[i] > 0.0 else 0.0
                h = (a * q + b) / (c * q + d)
                s[i] = sqrt(h) if h > 0.0 else 0.0
            # C = diag(s) U^H M ; Qnew = C^H C (lower triangle)
            zgemm(&tc, &tn, &n, &n, &n, &zone, u, &n, m, &n, &zzero, cm, &n)
            for j in range(n):
                for i in range(n):
                    cm[i + j * n] = cm[i + j * n] * s[i]
            zherk(&uplo, &tc, &n, &n, &done, cm, &n, &dzero, qnew, &n)
            if relative:
                scale = fabs(w[n - 1])
                if fabs(w[0]) > scale:
                    scale = fabs(w[0])
                if scale < tiny:
                    scale = tiny
            else:
                scale = 1.0
            acc = 0.0
            for j in range(n):
                for i in range(j, n):
                    diff = qnew[i + j * n] - qcur[i + j * n]
                    re = diff.real
                    im = diff.imag
                    if i == j:
                        acc += re * re + im * im
                    else:
                        acc += 2.0 * (re * re + im * im)
            change = sqrt(acc) / scale
            if averaged and change > prev and change > tol:
                for j in range(n):
                    for i in range(j, n):
                        qnew[i + j * n] = 0.5 * (qnew[i + j * n] + qcur[i + j * n])
            tr[k] = change
            k += 1
            tmp = qcur
            qcur = qnew
            qnew = tmp
            if change <= tol:
                if not rate_aware or change <= floor:
                    status = CONVERGED
                    break
                _rate(trp, k, &rho, &plateau)
                if plateau or (rho < 1.0 and change * rho <= tol * (1.0 - rho)):
                    status = CONVERGED
                    break
            prev = change

    out = Qa_arr if qcur == &qa[0, 0] else Qb_arr
    out = np.tril(out)
    out = out + np.tril(out, -1).conj().T
    return np.ascontiguousarray(out), int(k), int(status), trace_arr[:k].copy()
