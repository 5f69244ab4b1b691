"""Dense symmetric linear algebra used everywhere else.

Matrices are plain float64 ndarrays. Factorizations and eigensolves are
hand-rolled (pivot-tolerance Cholesky, cyclic Jacobi, power iteration) so
their behavior is pinned by the constants in tolerances.py; BLAS-backed
NumPy products do the bulk arithmetic.
"""

from __future__ import annotations

import numpy as np

from uqpkit import kernels, tolerances as tol
from uqpkit.errors import (
    DimensionMismatch,
    InvalidShape,
    NotPositiveDefinite,
    NotSymmetric,
    NumericalError,
)


def require_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidShape(f"expected a square matrix, got shape {a.shape}")
    return a


def require_symmetric(a: np.ndarray) -> np.ndarray:
    """Validate |a_ij - a_ji| <= rtol * max(1, |a_ij|) entrywise."""
    a = require_square(a)
    bound = tol.SYM_RTOL * np.maximum(1.0, np.abs(a))
    if not np.all(np.abs(a - a.T) <= bound):
        worst = float(np.max(np.abs(a - a.T)))
        raise NotSymmetric(f"matrix is not symmetric (max |a - a.T| = {worst:g})")
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular l with l @ l.T = a.

    Fails with NotPositiveDefinite when any pivot is <= 1e-13 times the
    largest diagonal entry of the input; this same test is the package's
    working definition of "SPD".
    """
    a = require_symmetric(a)
    n = a.shape[0]
    pivot_tol = tol.CHOL_PIVOT_RTOL * float(np.max(np.diagonal(a))) if n else 0.0
    if n <= tol.CHOL_PANEL:
        l, fail = kernels.cholesky_factor(a, pivot_tol)
        if fail >= 0:
            raise NotPositiveDefinite(f"pivot {fail} not positive (tol {pivot_tol:g})")
        return l
    return _blocked_cholesky(a, pivot_tol)


def _blocked_cholesky(a: np.ndarray, pivot_tol: float) -> np.ndarray:
    # Right-looking panel factorization; the trailing update is one BLAS
    # product per panel, the panel itself goes through the lane kernel.
    n = a.shape[0]
    panel = tol.CHOL_PANEL
    l = np.zeros((n, n), dtype=np.float64)
    work = np.array(a, dtype=np.float64, copy=True)
    for s in range(0, n, panel):
        e = min(s + panel, n)
        diag_l, fail = kernels.cholesky_factor(
            np.ascontiguousarray(work[s:e, s:e]), pivot_tol)
        if fail >= 0:
            raise NotPositiveDefinite(
                f"pivot {s + fail} not positive (tol {pivot_tol:g})")
        l[s:e, s:e] = diag_l
        if e < n:
            l21t = kernels.solve_lower(diag_l, np.ascontiguousarray(work[e:, s:e].T))
            l[e:, s:e] = l21t.T
            work[e:, e:] -= l[e:, s:e] @ l21t
    return l


def cholesky_solve(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (l @ l.T) x = b given the lower factor l."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != l.shape[0]:
        raise DimensionMismatch(
            f"rhs of shape {b.shape} against factor of shape {l.shape}")
    return kernels.solve_lower_t(l, kernels.solve_lower(l, b))


def spd_invert(a: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor, symmetrized."""
    a = require_square(a)
    l = cholesky(a)
    inv = cholesky_solve(l, np.eye(a.shape[0]))
    return (inv + inv.T) / 2.0


def p_norm_sq(x: np.ndarray, p: np.ndarray) -> float:
    """Quadratic form x.T @ p @ x."""
    p = require_square(p)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != p.shape[0]:
        raise DimensionMismatch(
            f"vector of shape {x.shape} against matrix of shape {p.shape}")
    return float(x @ (p @ x))


def sym_eigvals(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending (cyclic Jacobi)."""
    a = require_symmetric(a)
    if a.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    fro = float(np.linalg.norm(a))
    vals, off, _sweeps = kernels.jacobi_eigvals(
        a, tol.JACOBI_TARGET_RTOL * fro, tol.JACOBI_MAX_SWEEPS)
    if off > tol.JACOBI_RESIDUAL_RTOL * fro:
        raise NumericalError(
            f"Jacobi sweep stalled at off-diagonal norm {off:g} "
            f"(limit {tol.JACOBI_RESIDUAL_RTOL * fro:g})")
    return np.sort(vals)


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value by power iteration on a.T @ a.

    Runs a fixed number of seeded restarts and keeps the best estimate;
    each restart stops on a 1e-9 relative change or at the iteration cap.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidShape(f"expected a matrix, got shape {a.shape}")
    rows, cols = a.shape
    if rows == 0 or cols == 0:
        return 0.0
    cap = tol.SPECTRAL_ITER_FACTOR * max(rows, cols)
    best = 0.0
    for restart in range(tol.SPECTRAL_RESTARTS):
        rng = np.random.default_rng((7321, restart))
        v = rng.standard_normal(cols)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            continue
        v /= nv
        est = 0.0
        for _ in range(cap):
            u = a @ v
            s = float(np.linalg.norm(u))
            if s == 0.0:
                est = 0.0
                break
            w = a.T @ u
            nw = float(np.linalg.norm(w))
            if abs(s - est) <= tol.SPECTRAL_RTOL * max(s, 1e-300):
                est = s
                break
            est = s
            if nw == 0.0:
                break
            v = w / nw
        best = max(best, est)
    return best


def condition_numbers(p: np.ndarray) -> tuple[float, float]:
    """(kappa, kappa_tilde) of an SPD matrix.

    kappa is lambda_max / lambda_min; kappa_tilde replaces the numerator
    with the Frobenius norm, the variant the convergence bounds compare
    against.
    """
    p = require_symmetric(p)
    vals = sym_eigvals(p)
    lo = float(vals[0])
    hi = float(vals[-1])
    if lo <= 0.0:
        raise NotPositiveDefinite(f"smallest eigenvalue {lo:g} is not positive")
    return hi / lo, float(np.linalg.norm(p)) / lo


def is_spd(a: np.ndarray) -> bool:
    """Constructive SPD test: symmetric and Cholesky succeeds."""
    try:
        cholesky(a)
    except (NotSymmetric, NotPositiveDefinite, InvalidShape):
        return False
    return True


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))
