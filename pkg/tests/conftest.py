"""Shared builders for the test suite.

Everything here constructs expectations independently of the package
internals (plain NumPy), so tests compare hand-rolled kernels against a
second implementation rather than against themselves.
"""
import numpy as np

from uqpkit.problem import UqpProblem


def spd_matrix(n: int, seed: int, shift: float = 0.5) -> np.ndarray:
    """Well-conditioned SPD test matrix: V^T V / n + shift * I."""
    rng = np.random.default_rng((seed, 9000))
    v = rng.standard_normal((n, n))
    a = v.T @ v / n + shift * np.eye(n)
    return (a + a.T) / 2.0


def planted_problem(n: int, seed: int, shift: float = 0.5) -> tuple[UqpProblem, np.ndarray]:
    """Problem with a known solution: q = P x_star, r = 0."""
    p = spd_matrix(n, seed, shift)
    x_star = np.random.default_rng((seed, 9001)).standard_normal(n)
    return UqpProblem(p, p @ x_star), x_star


def permuted_order(part) -> np.ndarray:
    """Global index order implied by a partition's block sequence."""
    return np.concatenate([np.asarray(b, dtype=np.int64) for b in part.blocks])


def block_diagonal_of(p: np.ndarray, part) -> np.ndarray:
    """B: the permuted matrix with every off-block entry zeroed."""
    perm = permuted_order(part)
    pp = p[np.ix_(perm, perm)]
    b = np.zeros_like(pp)
    at = 0
    for blk in part.blocks:
        d = len(blk)
        b[at:at + d, at:at + d] = pp[at:at + d, at:at + d]
        at += d
    return b


def lambda_min_oracle(p: np.ndarray, part) -> float:
    """Independent lambda_min(P_Pi B_Pi^-1) via NumPy eigensolvers."""
    perm = permuted_order(part)
    pp = p[np.ix_(perm, perm)]
    b = block_diagonal_of(p, part)
    l = np.linalg.cholesky(b)
    linv = np.linalg.inv(l)
    m = linv @ pp @ linv.T
    return float(np.linalg.eigvalsh((m + m.T) / 2.0)[0])
