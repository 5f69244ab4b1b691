# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure-Python kernels.

Same algorithms and the same pivot/termination rules as pyfallback; the
scalar inner loops are simply run in C. Results may differ from the Python
lane in the last bit because summation order differs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport copysign, fabs, sqrt


def cholesky_factor(a, double tol):
    """Lower Cholesky factor; returns (l, fail) with fail = -1 on success."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    l_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] l = l_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, pivot, d
    for j in range(n):
        acc = 0.0
        for k in range(j):
            acc += l[j, k] * l[j, k]
        pivot = av[j, j] - acc
        if pivot <= tol:
            return l_arr, j
        d = sqrt(pivot)
        l[j, j] = d
        for i in range(j + 1, n):
            acc = 0.0
            for k in range(j):
                acc += l[i, k] * l[j, k]
            l[i, j] = (av[i, j] - acc) / d
    return l_arr, -1


def solve_lower(l, b):
    """Solve l @ x = b by forward substitution; b is a vector or matrix."""
    cdef double[:, ::1] lv = np.ascontiguousarray(l, dtype=np.float64)
    b_arr = np.array(b, dtype=np.float64, copy=True, order="C")
    squeeze = b_arr.ndim == 1
    if squeeze:
        b_arr = b_arr.reshape(-1, 1)
    cdef double[:, ::1] x = b_arr
    cdef Py_ssize_t n = lv.shape[0], k = x.shape[1]
    cdef Py_ssize_t i, j, col
    cdef double acc
    for col in range(k):
        for i in range(n):
            acc = x[i, col]
            for j in range(i):
                acc -= lv[i, j] * x[j, col]
            x[i, col] = acc / lv[i, i]
    return b_arr[:, 0] if squeeze else b_arr


def solve_lower_t(l, b):
    """Solve l.T @ x = b by back substitution; b is a vector or matrix."""
    cdef double[:, ::1] lv = np.ascontiguousarray(l, dtype=np.float64)
    b_arr = np.array(b, dtype=np.float64, copy=True, order="C")
    squeeze = b_arr.ndim == 1
    if squeeze:
        b_arr = b_arr.reshape(-1, 1)
    cdef double[:, ::1] x = b_arr
    cdef Py_ssize_t n = lv.shape[0], k = x.shape[1]
    cdef Py_ssize_t i, j, col
    cdef double acc
    for col in range(k):
        for i in range(n - 1, -1, -1):
            acc = x[i, col]
            for j in range(i + 1, n):
                acc -= lv[j, i] * x[j, col]
            x[i, col] = acc / lv[i, i]
    return b_arr[:, 0] if squeeze else b_arr


cdef double _offdiag_norm(double[:, ::1] w, Py_ssize_t n):
    cdef double total = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(n):
            if i != j:
                total += w[i, j] * w[i, j]
    return sqrt(total)


def jacobi_eigvals(a, double target_off, int max_sweeps):
    """Cyclic-by-row Jacobi, eigenvalues only; returns (diag, off, sweeps)."""
    w_arr = np.array(a, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t n = w.shape[0]
    if n == 1:
        return w_arr.diagonal().copy(), 0.0, 0
    cdef double off = _offdiag_norm(w, n)
    cdef double new_off, apq, app, aqq, theta, t, c, s, wp, wq
    cdef Py_ssize_t p, q, i
    cdef int sweeps = 0
    while off > target_off and sweeps < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = w[p, q]
                if apq == 0.0:
                    continue
                app = w[p, p]
                aqq = w[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = copysign(1.0, theta) / (fabs(theta) + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    wp = w[p, i]
                    wq = w[q, i]
                    w[p, i] = c * wp - s * wq
                    w[q, i] = s * wp + c * wq
                for i in range(n):
                    wp = w[i, p]
                    wq = w[i, q]
                    w[i, p] = c * wp - s * wq
                    w[i, q] = s * wp + c * wq
                w[p, p] = app - t * apq
                w[q, q] = aqq + t * apq
                w[p, q] = 0.0
                w[q, p] = 0.0
        sweeps += 1
        new_off = _offdiag_norm(w, n)
        if new_off >= off:
            off = new_off
            break
        off = new_off
    return w_arr.diagonal().copy(), off, sweeps


def block_scores(grad, idx, blk_ptr, inv_flat, inv_ptr):
    """Quadratic form g_pi^T inv_pi g_pi for every block (see pyfallback)."""
    cdef double[::1] g = np.ascontiguousarray(grad, dtype=np.float64)
    cdef long[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef long[::1] bp = np.ascontiguousarray(blk_ptr, dtype=np.int64)
    cdef double[::1] inv = np.ascontiguousarray(inv_flat, dtype=np.float64)
    cdef long[::1] ip = np.ascontiguousarray(inv_ptr, dtype=np.int64)
    cdef Py_ssize_t m = bp.shape[0] - 1
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b, r, cc, d, base, off
    cdef double total, row_acc, gr
    for b in range(m):
        base = bp[b]
        d = bp[b + 1] - base
        off = ip[b]
        total = 0.0
        for r in range(d):
            gr = g[ix[base + r]]
            row_acc = 0.0
            for cc in range(d):
                row_acc += inv[off + r * d + cc] * g[ix[base + cc]]
            total += gr * row_acc
        out[b] = total
    return out_arr
