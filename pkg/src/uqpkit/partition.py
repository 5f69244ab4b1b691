"""Hard partitions of the coordinate set and their convergence-rate bounds.

A partition splits [0, n) into disjoint, nonempty, ordered blocks. Block
methods fetch exactly one block's rows per iteration, so the partition both
defines the on-disk layout and drives the contraction-rate bound
1 - lambda_min(P_Pi B_Pi^-1) / m computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uqpkit import linalg, tolerances as tol
from uqpkit.kernels import solve_lower
from uqpkit.errors import (
    IndexOutOfRange,
    InvalidPartition,
    IoError,
    NumericalError,
    TooLargeForDirect,
)


class Partition:
    """Ordered list of index blocks covering [0, n) exactly once."""

    def __init__(self, blocks, n: int):
        clean = []
        seen = np.zeros(n, dtype=bool)
        total = 0
        for b, blk in enumerate(blocks):
            arr = np.asarray(blk, dtype=np.int64)
            if arr.ndim != 1 or arr.size == 0:
                raise InvalidPartition(f"block {b} is empty or not a vector")
            if arr.min() < 0 or arr.max() >= n:
                raise InvalidPartition(f"block {b} has indices outside [0, {n})")
            if seen[arr].any():
                raise InvalidPartition(f"block {b} overlaps an earlier block")
            seen[arr] = True
            total += arr.size
            clean.append(arr)
        if total != n:
            raise InvalidPartition(f"blocks cover {total} of {n} indices")
        self.blocks = clean
        self.n = int(n)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def d(self) -> int:
        """Largest block size."""
        return max(b.size for b in self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks], dtype=np.int64)

    def concat(self) -> np.ndarray:
        """All indices in block order (a permutation of range(n))."""
        return np.concatenate(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n == other.n and len(self.blocks) == len(other.blocks) and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))


def contiguous_partition(n: int, d: int) -> Partition:
    """Blocks [0..d), [d..2d), ...; the last block may be smaller."""
    if d <= 0:
        raise InvalidPartition(f"block size must be positive, got {d}")
    blocks = [np.arange(s, min(s + d, n), dtype=np.int64) for s in range(0, n, d)]
    return Partition(blocks, n)


def random_partition(n: int, d: int, seed: int) -> Partition:
    """A seeded shuffle of range(n) sliced into blocks of at most d."""
    if d <= 0:
        raise InvalidPartition(f"block size must be positive, got {d}")
    perm = np.random.default_rng(seed).permutation(n).astype(np.int64)
    blocks = [perm[s:s + d] for s in range(0, n, d)]
    return Partition(blocks, n)


def dominant_partition(prob, d: int, heavy_set, seed: int = 0) -> Partition:
    """Heavy indices isolated as block 0, the rest randomly chunked.

    The heavy block is kept exactly as given (no padding up to d). With an
    empty heavy set this degenerates to a plain random partition.
    """
    if d <= 0:
        raise InvalidPartition(f"block size must be positive, got {d}")
    n = prob.n
    heavy = np.unique(np.asarray(heavy_set, dtype=np.int64))
    if heavy.size and (heavy.min() < 0 or heavy.max() >= n):
        raise IndexOutOfRange(f"heavy set reaches outside [0, {n})")
    rest = np.setdiff1d(np.arange(n, dtype=np.int64), heavy)
    rest = np.random.default_rng(seed).permutation(rest)
    blocks = [] if heavy.size == 0 else [heavy]
    blocks += [rest[s:s + d] for s in range(0, rest.size, d)]
    return Partition(blocks, n)


def detect_heavy_rows(prob, count: int) -> np.ndarray:
    """Indices of the count largest diagonal entries, ascending.

    A rough heuristic for picking the dominant block when the heavy set is
    not known from the generator; ties break toward the lower index.
    """
    if not 0 <= count <= prob.n:
        raise IndexOutOfRange(f"count {count} out of range for n={prob.n}")
    if isinstance(prob.p, np.ndarray):
        diag = np.diagonal(prob.p)
    else:
        diag = prob.p.diagonal()
    order = np.argsort(-diag, kind="stable")[:count]
    return np.sort(order.astype(np.int64))


# ---------------------------------------------------------------------------
# HDC envelope


@dataclass(frozen=True)
class HdcLimits:
    """Resource envelope: at most rho rows of P resident at once."""

    rho: int

    def d_cap(self, n: int, method: str) -> float:
        """Strict upper bound on the admissible block size for a method."""
        if method in ("bk", "gbcd"):
            return min(math.sqrt(n), float(self.rho))
        if method == "bcd":
            return min(float(n) ** (2.0 / 3.0), float(self.rho))
        raise InvalidPartition(f"unknown method {method!r}")


def hdc_admissible(part: Partition, limits: HdcLimits, method: str) -> bool:
    """True iff the largest block is strictly below the method's cap."""
    return part.d < limits.d_cap(part.n, method)


# ---------------------------------------------------------------------------
# Rate bounds


@dataclass(frozen=True)
class RateReport:
    """Contraction-rate bounds for one (problem, partition) pair.

    bound_exact is 1 - lambda_min_pb / m and always applies; bound_simple
    replaces lambda_min_pb by 1 - dominance_gap and is only informative
    when the gap is below one.
    """

    m: int
    lambda_min_pb: float
    lambda_min_b: float
    offblock_norm: float
    dominance_gap: float
    bound_exact: float
    bound_simple: float


def rate_bound(prob, part: Partition,
               cap: int = tol.DIRECT_SOLVE_CAP) -> RateReport:
    """Worst-case per-iteration contraction of squared P-norm error.

    lambda_min_pb is the smallest eigenvalue of P_Pi B_Pi^-1, computed on
    the symmetric congruence L^-1 P_Pi L^-T where L is the block-diagonal
    Cholesky factor of B_Pi (same spectrum, and Jacobi gets a symmetric
    input). Dense desk-scale only.
    """
    if part.n != prob.n:
        raise InvalidPartition(f"partition covers {part.n}, problem has {prob.n}")
    if prob.n > cap:
        raise TooLargeForDirect(f"n={prob.n} exceeds the eigensolve cap {cap}")
    p = prob.dense() if hasattr(prob, "dense") else np.asarray(prob)
    perm = part.concat()
    p_pi = p[np.ix_(perm, perm)]
    n = part.n
    m = part.m

    l_big = np.zeros((n, n), dtype=np.float64)
    lambda_min_b = math.inf
    start = 0
    for blk in part.blocks:
        d = blk.size
        sub = p_pi[start:start + d, start:start + d]
        l_big[start:start + d, start:start + d] = linalg.cholesky(sub)
        lambda_min_b = min(lambda_min_b, float(linalg.sym_eigvals(sub)[0]))
        start += d

    y = solve_lower(l_big, p_pi)
    w = solve_lower(l_big, np.ascontiguousarray(y.T)).T
    w = (w + w.T) / 2.0
    lambda_min_pb = float(linalg.sym_eigvals(w)[0])
    if lambda_min_pb <= 0.0:
        raise NumericalError(
            f"computed lambda_min(P_Pi B_Pi^-1) = {lambda_min_pb:g} <= 0")

    off = p_pi - _block_diagonal(p_pi, part)
    off_norm = linalg.spectral_norm(off)
    gap = off_norm / lambda_min_b
    return RateReport(
        m=m,
        lambda_min_pb=lambda_min_pb,
        lambda_min_b=lambda_min_b,
        offblock_norm=off_norm,
        dominance_gap=gap,
        bound_exact=1.0 - lambda_min_pb / m,
        bound_simple=1.0 - (1.0 - gap) / m,
    )


def _block_diagonal(p_pi: np.ndarray, part: Partition) -> np.ndarray:
    b = np.zeros_like(p_pi)
    start = 0
    for blk in part.blocks:
        d = blk.size
        b[start:start + d, start:start + d] = p_pi[start:start + d,
                                                   start:start + d]
        start += d
    return b


# ---------------------------------------------------------------------------
# Text serialization: one line per block, comma-separated zero-based indices.


def write_partition(part: Partition, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for blk in part.blocks:
            fh.write(",".join(str(int(i)) for i in blk))
            fh.write("\n")


def read_partition(path) -> Partition:
    """Parse the text format; n is the total index count (blocks must cover)."""
    blocks = []
    try:
        fh = open(path, "r", encoding="ascii")
    except OSError as exc:
        raise IoError(f"cannot read partition file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                blocks.append([int(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise InvalidPartition(f"line {lineno}: {exc}") from exc
    n = sum(len(b) for b in blocks)
    return Partition(blocks, n)
