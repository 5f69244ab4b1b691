"""Unconstrained quadratic programs: containers, evaluation, generators.

A problem is min over x of f(x) = x.T P x / 2 - x.T q + r with P symmetric
positive definite. P may be an in-memory ndarray (validated SPD here) or an
on-disk block store (SPD attested by whoever wrote it). The unique minimizer
solves P x = q, and f(x) - f(x_opt) = ||x - x_opt||_P^2 / 2, which is why
every error metric downstream is a P-norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from uqpkit import linalg, tolerances as tol
from uqpkit.errors import (
    DimensionMismatch,
    InvalidShape,
    NumericalError,
    TooLargeForDirect,
)


class UqpProblem:
    """Problem data (p, q, r) plus the access mode implied by type(p).

    Attributes:
        p: ndarray (dense, SPD-validated) or a BlockStore-like object
           exposing n, fetch_block, partition.
        q: right-hand side vector.
        r: constant offset in the objective.
        n: dimension.
    """

    def __init__(self, p, q, r: float = 0.0):
        q = np.asarray(q, dtype=np.float64)
        if q.ndim != 1:
            raise InvalidShape(f"q must be a vector, got shape {q.shape}")
        if isinstance(p, np.ndarray):
            p = linalg.require_symmetric(p)
            if p.shape[0] != q.shape[0]:
                raise DimensionMismatch(
                    f"p is {p.shape} but q has length {q.shape[0]}")
            # constructive SPD check; the factor is discarded
            linalg.cholesky(p)
            self.n = p.shape[0]
        else:
            if p.n != q.shape[0]:
                raise DimensionMismatch(
                    f"store holds n={p.n} but q has length {q.shape[0]}")
            self.n = int(p.n)
        self.p = p
        self.q = q
        self.r = float(r)

    @property
    def in_memory(self) -> bool:
        return isinstance(self.p, np.ndarray)

    def dense(self) -> np.ndarray:
        """The full matrix, materializing a store-backed one (O(n^2) memory)."""
        if self.in_memory:
            return self.p
        return self.p.assemble_dense()


@dataclass(frozen=True)
class Oracle:
    """Ground truth for benchmark error metrics."""

    x_opt: np.ndarray
    f_opt: float


def eval_f(prob: UqpProblem, x: np.ndarray) -> float:
    """Objective value; one streaming pass for store-backed problems."""
    x = _check_vec(prob, x)
    if prob.in_memory:
        quad = float(x @ (prob.p @ x))
    else:
        quad = 0.0
        for i in range(prob.p.m):
            rows, _ = prob.p.fetch_block(i)
            quad += float(x[prob.p.partition.blocks[i]] @ (rows @ x))
    return 0.5 * quad - float(x @ prob.q) + prob.r


def eval_grad(prob: UqpProblem, x: np.ndarray) -> np.ndarray:
    """Gradient P x - q; one streaming pass for store-backed problems."""
    x = _check_vec(prob, x)
    if prob.in_memory:
        return prob.p @ x - prob.q
    g = np.empty(prob.n, dtype=np.float64)
    for i in range(prob.p.m):
        rows, q_sub = prob.p.fetch_block(i)
        g[prob.p.partition.blocks[i]] = rows @ x - q_sub
    return g


def solve_direct(prob: UqpProblem, cap: int = tol.DIRECT_SOLVE_CAP) -> Oracle:
    """Dense Cholesky solve of P x = q, with iterative refinement.

    Only intended for desk-scale problems; anything above cap is refused
    with TooLargeForDirect. The result satisfies
    ||P x_opt - q||_2 <= 1e-9 ||q||_2 or a NumericalError is raised.
    """
    if prob.n > cap:
        raise TooLargeForDirect(f"n={prob.n} exceeds the direct-solve cap {cap}")
    p = prob.dense()
    q = prob.q
    l = linalg.cholesky(p)
    x = linalg.cholesky_solve(l, q)
    target = tol.ORACLE_RESIDUAL_RTOL * float(np.linalg.norm(q))
    for _ in range(2):
        resid = q - p @ x
        if float(np.linalg.norm(resid)) <= 0.25 * target:
            break
        x = x + linalg.cholesky_solve(l, resid)
    resid_norm = float(np.linalg.norm(q - p @ x))
    if resid_norm > target:
        raise NumericalError(
            f"direct solve residual {resid_norm:g} above target {target:g}")
    f_opt = prob.r - 0.5 * float(q @ x)
    return Oracle(x_opt=x, f_opt=f_opt)


# ---------------------------------------------------------------------------
# Instance generators. All randomness is drawn from named PCG64 substreams
# keyed as (seed, tag, ...) so each piece is reproducible independently and
# in parallel: tag 0 = planted solution, tag 1 = matrix factor entries,
# tag 2 = heavy-index choice.


def gen_random_spd(n: int, seed: int) -> UqpProblem:
    """Dense unstructured instance: P = V.T V + n * 1e-9 * I, planted q."""
    v = np.random.default_rng((seed, 1)).standard_normal((n, n))
    p = v.T @ v
    p += n * tol.RIDGE_SCALE * np.eye(n)
    return _planted(p, seed)


def gen_block_dominant(n: int, block: int, diag_scale: float,
                       off_scale: float, seed: int) -> UqpProblem:
    """Tile-structured instance favoring contiguous block methods.

    V is assembled from block x block standard-normal tiles, scaled by
    diag_scale on the diagonal and off_scale elsewhere; P = V.T V plus the
    usual ridge. Tile (i, j) has its own RNG stream, so assembly order
    (or parallel assembly) cannot change the result.
    """
    if block <= 0 or n % block != 0:
        raise InvalidShape(f"block size {block} must divide n={n}")
    m = n // block
    v = np.empty((n, n), dtype=np.float64)
    for i in range(m):
        for j in range(m):
            scale = diag_scale if i == j else off_scale
            tile = np.random.default_rng((seed, 1, i, j)).standard_normal(
                (block, block))
            v[i * block:(i + 1) * block, j * block:(j + 1) * block] = scale * tile
    p = v.T @ v
    p += n * tol.RIDGE_SCALE * np.eye(n)
    return _planted(p, seed)


def gen_scaled_rows(n: int, heavy_count: int, factor: float,
                    seed: int) -> tuple[UqpProblem, np.ndarray]:
    """Instance with a few rows/columns scaled up symmetrically.

    Rows and columns indexed by the heavy set are multiplied by factor
    (entries heavy x heavy therefore by factor squared), which keeps the
    matrix SPD. Returns the problem together with the heavy index set,
    which is also recoverable via scaled_heavy_set.
    """
    if not 0 <= heavy_count < n:
        raise InvalidShape(f"heavy_count {heavy_count} out of range for n={n}")
    if factor < 1.0:
        raise InvalidShape(f"factor {factor} must be >= 1")
    v = np.random.default_rng((seed, 1)).standard_normal((n, n))
    p = v.T @ v
    p += n * tol.RIDGE_SCALE * np.eye(n)
    tau = scaled_heavy_set(n, heavy_count, seed)
    s = np.ones(n, dtype=np.float64)
    s[tau] = factor
    p = p * np.outer(s, s)
    return _planted(p, seed), tau


def scaled_heavy_set(n: int, heavy_count: int, seed: int) -> np.ndarray:
    """The heavy index set used by gen_scaled_rows for the same arguments."""
    rng = np.random.default_rng((seed, 2))
    return np.sort(rng.choice(n, size=heavy_count, replace=False))


def _planted(p: np.ndarray, seed: int) -> UqpProblem:
    x_star = np.random.default_rng((seed, 0)).standard_normal(p.shape[0])
    q = p @ x_star
    return UqpProblem(p, q, 0.0)


def _check_vec(prob: UqpProblem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (prob.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({prob.n},)")
    return x
