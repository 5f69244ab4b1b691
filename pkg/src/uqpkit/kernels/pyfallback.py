"""Pure-Python (NumPy) implementations of the hot kernels.

This lane is selected when the compiled extension is unavailable or when
UQPKIT_PURE_PYTHON=1. Semantics match the compiled lane exactly; only
summation order (and therefore last-bit rounding) may differ. Each lane is
deterministic on its own.
"""

from __future__ import annotations

import math

import numpy as np


def cholesky_factor(a: np.ndarray, tol: float):
    """Lower Cholesky factor of a symmetric matrix.

    Returns (l, fail) where fail is -1 on success or the 0-based index of
    the first pivot found at or below tol. On failure l holds the partial
    factor, which callers must not use.
    """
    n = a.shape[0]
    l = np.zeros((n, n), dtype=np.float64)
    for j in range(n):
        pivot = a[j, j] - l[j, :j] @ l[j, :j]
        if pivot <= tol:
            return l, j
        d = math.sqrt(pivot)
        l[j, j] = d
        if j + 1 < n:
            l[j + 1:, j] = (a[j + 1:, j] - l[j + 1:, :j] @ l[j, :j]) / d
    return l, -1


def solve_lower(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve l @ x = b by forward substitution. b may be a vector or matrix."""
    x = np.array(b, dtype=np.float64, copy=True)
    n = l.shape[0]
    for i in range(n):
        x[i] = (x[i] - l[i, :i] @ x[:i]) / l[i, i]
    return x


def solve_lower_t(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve l.T @ x = b by back substitution. b may be a vector or matrix."""
    x = np.array(b, dtype=np.float64, copy=True)
    n = l.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - l[i + 1:, i] @ x[i + 1:]) / l[i, i]
    return x


def jacobi_eigvals(a: np.ndarray, target_off: float, max_sweeps: int):
    """Cyclic-by-row Jacobi diagonalization, eigenvalues only.

    Sweeps until the off-diagonal Frobenius norm is <= target_off (absolute)
    or max_sweeps is hit. Returns (diag, off, sweeps) with diag unsorted.
    """
    w = np.array(a, dtype=np.float64, copy=True)
    n = w.shape[0]
    if n == 1:
        return w.diagonal().copy(), 0.0, 0
    off = _offdiag_norm(w)
    sweeps = 0
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
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                wp = w[p, :].copy()
                wq = w[q, :].copy()
                w[p, :] = c * wp - s * wq
                w[q, :] = s * wp + c * wq
                wp = w[:, p].copy()
                wq = w[:, q].copy()
                w[:, p] = c * wp - s * wq
                w[:, q] = s * wp + c * wq
                # stable closed forms for the rotated 2x2 block
                w[p, p] = app - t * apq
                w[q, q] = aqq + t * apq
                w[p, q] = 0.0
                w[q, p] = 0.0
        sweeps += 1
        new_off = _offdiag_norm(w)
        if new_off >= off:
            off = new_off
            break
        off = new_off
    return w.diagonal().copy(), off, sweeps


def _offdiag_norm(w: np.ndarray) -> float:
    d = np.diagonal(w)
    total = float(np.sum(w * w)) - float(d @ d)
    return math.sqrt(max(total, 0.0))


def block_scores(grad: np.ndarray, idx: np.ndarray, blk_ptr: np.ndarray,
                 inv_flat: np.ndarray, inv_ptr: np.ndarray) -> np.ndarray:
    """Quadratic form g_pi^T inv_pi g_pi for every block.

    idx concatenates the block index lists, blk_ptr gives block boundaries
    within idx, inv_flat concatenates the row-major inverse blocks, and
    inv_ptr gives their offsets.
    """
    m = blk_ptr.shape[0] - 1
    sizes = np.diff(blk_ptr)
    g = grad[idx]
    if sizes.max(initial=0) == 1:
        return g * g * inv_flat
    if np.all(sizes == sizes[0]):
        d = int(sizes[0])
        gv = g.reshape(m, d)
        inv = inv_flat.reshape(m, d, d)
        return np.einsum("bi,bij,bj->b", gv, inv, gv)
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        gi = g[blk_ptr[i]:blk_ptr[i + 1]]
        d = gi.shape[0]
        inv = inv_flat[inv_ptr[i]:inv_ptr[i + 1]].reshape(d, d)
        out[i] = gi @ inv @ gi
    return out
