"""Iterative solvers: greedy/cyclic/randomized block methods and baselines.

The block methods (GBCD, BCD, BK) touch one block of rows per iteration.
GBCD and BCD maintain the full gradient incrementally: after updating block
pi with correction alpha, the new gradient is grad + P_pi^T alpha, which
needs exactly the rows already fetched for the update. The greedy score of
a block is beta_pi = g_pi^T (P_pi_pi)^-1 g_pi, the exact drop in squared
P-norm error the block update would achieve, so argmax beta is steepest
blockwise descent. BK solves the block's equations in the least-squares
sense instead (monotone in the 2-norm); SD and CG are the classical dense
baselines and pay a full matrix pass per iteration.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from uqpkit import kernels, linalg, tolerances as tol
from uqpkit.blockstore import BlockInverses, BlockStore
from uqpkit.errors import (
    DimensionMismatch,
    HdcViolation,
    IndexOutOfRange,
    InvalidPartition,
    InvalidShape,
    InvalidStrategyConfig,
    NonFinite,
    NotPositiveDefinite,
    NumericalError,
    RankDeficient,
    SingularBlockGram,
    TooLargeForDirect,
)
from uqpkit.partition import HdcLimits, Partition, hdc_admissible
from uqpkit.problem import Oracle, UqpProblem
from uqpkit.trace import Trace

BLOCK_METHODS = ("gbcd", "bcd", "bk")
ALL_METHODS = BLOCK_METHODS + ("gbcd-bs", "sd", "cg")

# Greedy BK rescoring is O(n^2) per iteration; keep it at desk scale.
GREEDY_BK_CAP = 4096


@dataclass
class SolverState:
    """Mutable per-run state. grad is the incrementally maintained gradient
    for the BCD family (None for BK, refreshed each step for SD/CG)."""

    x: np.ndarray
    grad: np.ndarray | None
    k: int
    rng: np.random.Generator
    rr_cursor: int = 0
    cg_r: np.ndarray | None = None
    cg_p: np.ndarray | None = None
    cg_rr: float = 0.0


@dataclass
class StepReport:
    """What one step did. block is -1 for direction-based steps; beta is the
    chosen block's score (BCD family), the realized squared 2-norm decrease
    (BK), the realized squared P-norm decrease (row-subset steps), or NaN.
    rows_touched records the cost class: the block size for block methods,
    the subset size for row-subset steps, n for full-pass methods."""

    block: int
    beta: float
    blocks_fetched: int
    rows_touched: int
    delta_pnormsq: float | None = None


# ---------------------------------------------------------------------------
# Data access adapters: one interface over in-memory matrices and stores.


class MatrixAccess:
    """Counted access to an in-memory problem, mirroring store semantics."""

    def __init__(self, p: np.ndarray, q: np.ndarray, part: Partition | None):
        self.p = p
        self.q = q
        self.n = q.shape[0]
        self.partition = part
        self.access_counter = 0
        self.bytes_read = 0
        self.peak_resident_rows = 0
        self._locator = None

    def fetch_block(self, i: int):
        blk = self.partition.blocks[i]
        rows = self.p[blk, :]
        self.access_counter += 1
        self.bytes_read += rows.nbytes + blk.size * 8
        self.peak_resident_rows = max(self.peak_resident_rows, blk.size)
        return rows, self.q[blk]

    def fetch_rows(self, indices):
        rows = self.p[indices, :]
        if self.partition is None:
            touched = 1
        else:
            if self._locator is None:
                loc = np.empty(self.n, dtype=np.int64)
                for b, blk in enumerate(self.partition.blocks):
                    loc[blk] = b
                self._locator = loc
            touched = int(np.unique(self._locator[indices]).size)
        self.access_counter += touched
        self.bytes_read += rows.nbytes
        self.peak_resident_rows = max(self.peak_resident_rows, len(indices))
        return rows, touched

    def matvec(self, x: np.ndarray) -> np.ndarray:
        m = self.partition.m if self.partition is not None else 1
        self.access_counter += m
        self.bytes_read += self.p.nbytes
        self.peak_resident_rows = max(
            self.peak_resident_rows,
            self.partition.d if self.partition is not None else self.n)
        return self.p @ x

    def matvec_uncounted(self, x: np.ndarray) -> np.ndarray:
        # metric side-channel: never disturbs the access audit
        return self.p @ x

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.p)


class StoreAccess:
    """Access to a block store; counters live on the store handle."""

    def __init__(self, store: BlockStore):
        self.store = store
        self.n = store.n
        self.partition = store.partition
        self.q = store.assemble_q()

    @property
    def access_counter(self):
        return self.store.access_counter

    @property
    def bytes_read(self):
        return self.store.bytes_read

    @property
    def peak_resident_rows(self):
        return self.store.peak_resident_rows

    def fetch_block(self, i: int):
        return self.store.fetch_block(i)

    def fetch_rows(self, indices):
        return self.store.fetch_rows(indices)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        w = np.empty(self.n, dtype=np.float64)
        for i, blk in enumerate(self.partition.blocks):
            rows, _ = self.store.fetch_block(i)
            w[blk] = rows @ x
        return w

    def matvec_uncounted(self, x: np.ndarray) -> np.ndarray:
        saved = (self.store.access_counter, self.store.bytes_read,
                 self.store.current_resident_rows, self.store.peak_resident_rows)
        w = self.matvec(x)
        (self.store.access_counter, self.store.bytes_read,
         self.store.current_resident_rows, self.store.peak_resident_rows) = saved
        return w

    def diagonal(self) -> np.ndarray:
        saved = (self.store.access_counter, self.store.bytes_read,
                 self.store.current_resident_rows, self.store.peak_resident_rows)
        d = self.store.diagonal()
        (self.store.access_counter, self.store.bytes_read,
         self.store.current_resident_rows, self.store.peak_resident_rows) = saved
        return d


# ---------------------------------------------------------------------------
# Scoring


def partial_grad(state: SolverState, pi) -> np.ndarray:
    """Gradient restricted to the block's coordinates."""
    if state.grad is None:
        raise InvalidStrategyConfig("this state does not maintain a gradient")
    pi = np.asarray(pi, dtype=np.int64)
    if pi.size and (pi.min() < 0 or pi.max() >= state.grad.shape[0]):
        raise IndexOutOfRange(f"block indices outside [0, {state.grad.shape[0]})")
    return state.grad[pi]


def score_blocks(state: SolverState, inverses: BlockInverses) -> np.ndarray:
    """beta for every block: g_pi^T (P_pi_pi)^-1 g_pi, from the maintained
    gradient. Cost is sum of d_i^2, at most n*d."""
    if state.grad is None:
        raise InvalidStrategyConfig("score_blocks needs a maintained gradient")
    return kernels.block_scores(state.grad, inverses.idx, inverses.blk_ptr,
                                inverses.inv_flat, inverses.inv_ptr)


def parallel_score_blocks(state: SolverState, inverses: BlockInverses,
                          n_workers: int) -> np.ndarray:
    """score_blocks with blocks divided across a thread pool.

    Each block's summation order is unchanged, so the result is
    bit-identical to the serial path for any worker count.
    """
    if n_workers <= 1:
        return score_blocks(state, inverses)
    m = inverses.partition.m
    bounds = np.linspace(0, m, min(n_workers, m) + 1).astype(np.int64)
    grad = state.grad

    def chunk(w: int) -> np.ndarray:
        a, b = bounds[w], bounds[w + 1]
        ia, ib = inverses.blk_ptr[a], inverses.blk_ptr[b]
        va, vb = inverses.inv_ptr[a], inverses.inv_ptr[b]
        return kernels.block_scores(
            grad,
            inverses.idx[ia:ib],
            inverses.blk_ptr[a:b + 1] - ia,
            inverses.inv_flat[va:vb],
            inverses.inv_ptr[a:b + 1] - va)

    with ThreadPoolExecutor(max_workers=len(bounds) - 1) as pool:
        parts = list(pool.map(chunk, range(len(bounds) - 1)))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Block selection strategies


class RoundRobin:
    kind = "round-robin"

    def select(self, state: SolverState, m: int) -> int:
        i = state.rr_cursor % m
        state.rr_cursor += 1
        return i


class WeightedRandom:
    """Seeded sampling with probability proportional to fixed weights."""

    def __init__(self, kind: str, weights: np.ndarray):
        self.kind = kind
        w = np.asarray(weights, dtype=np.float64)
        if w.min() < 0 or w.sum() <= 0:
            raise InvalidStrategyConfig("weights must be nonnegative, not all zero")
        self.cum = np.cumsum(w / w.sum())

    def select(self, state: SolverState, m: int) -> int:
        u = state.rng.random()
        return int(np.searchsorted(self.cum, u, side="right").clip(0, m - 1))


class GreedyBk:
    kind = "greedy"


def _bcd_strategy(kind: str, inverses: BlockInverses):
    part = inverses.partition
    if kind == "round-robin":
        return RoundRobin()
    if kind == "rand-eig":
        # lambda_max(P_pi_pi) = 1 / lambda_min of its stored inverse
        weights = np.array([1.0 / linalg.sym_eigvals(inv)[0]
                            for inv in inverses.invs])
        return WeightedRandom(kind, weights)
    if kind == "rand-diag":
        if part.d != 1:
            raise InvalidStrategyConfig(
                "rand-diag needs a singleton partition (Leventhal-Lewis sampling)")
        weights = np.array([1.0 / inv[0, 0] for inv in inverses.invs])
        return WeightedRandom(kind, weights)
    raise InvalidStrategyConfig(f"unknown bcd strategy {kind!r}")


def _bk_strategy(kind: str, access) -> object:
    part = access.partition
    if kind == "round-robin":
        return RoundRobin()
    if kind == "rand-rownorm":
        # block weight = squared Frobenius norm of its rows, the blockwise
        # sum of the classical per-row weights
        weights = np.empty(part.m, dtype=np.float64)
        for i in range(part.m):
            rows, _ = access.fetch_block(i)
            weights[i] = float(np.sum(rows * rows))
        return WeightedRandom(kind, weights)
    if kind == "greedy":
        return GreedyBk()
    raise InvalidStrategyConfig(f"unknown bk strategy {kind!r}")


# ---------------------------------------------------------------------------
# Steps


def _block_update(state: SolverState, access, inverses: BlockInverses,
                  i: int, beta: float) -> StepReport:
    # shared BCD-family update: x_pi += inv * (q_pi - P_pi x), grad += P_pi^T alpha
    blk = inverses.partition.blocks[i]
    rows, q_sub = access.fetch_block(i)
    rhs = q_sub - rows @ state.x
    alpha = inverses.invs[i] @ rhs
    state.x[blk] += alpha
    state.grad += rows.T @ alpha
    state.k += 1
    return StepReport(block=i, beta=beta, blocks_fetched=1,
                      rows_touched=int(blk.size))


def gbcd_step(state: SolverState, access, inverses: BlockInverses) -> StepReport:
    """Greedy step: update the block with the largest beta (ties toward the
    lowest block index)."""
    betas = score_blocks(state, inverses)
    i = int(np.argmax(betas))
    return _block_update(state, access, inverses, i, float(betas[i]))


def bcd_step(state: SolverState, access, inverses: BlockInverses,
             strategy) -> StepReport:
    """Strategy-selected block update (same update rule as gbcd_step)."""
    i = strategy.select(state, inverses.partition.m)
    g = state.grad[inverses.partition.blocks[i]]
    beta = float(g @ (inverses.invs[i] @ g))
    return _block_update(state, access, inverses, i, beta)


def bk_step(state: SolverState, access, strategy,
            gram_factors: list | None = None) -> StepReport:
    """Block Kaczmarz projection onto the chosen block's solution set.

    x += P_pi^T (P_pi P_pi^T)^-1 (q_pi - P_pi x). No gradient is maintained.
    Greedy selection rescans the full residual, an O(n^2) path that needs
    the precomputed Gram factors.
    """
    part = access.partition
    if isinstance(strategy, GreedyBk):
        if gram_factors is None:
            raise InvalidStrategyConfig("greedy bk_step needs gram_factors")
        resid = access.q - access.matvec(state.x)
        scores = np.empty(part.m, dtype=np.float64)
        sols = []
        for i, blk in enumerate(part.blocks):
            w = linalg.cholesky_solve(gram_factors[i], resid[blk])
            sols.append(w)
            scores[i] = float(resid[blk] @ w)
        i = int(np.argmax(scores))
        rows, _ = access.fetch_block(i)
        w = sols[i]
        beta = float(scores[i])
        rows_touched = access.n
    else:
        i = strategy.select(state, part.m)
        rows, q_sub = access.fetch_block(i)
        resid_blk = q_sub - rows @ state.x
        gram = rows @ rows.T
        gram = (gram + gram.T) / 2.0
        try:
            l = linalg.cholesky(gram)
        except NotPositiveDefinite as exc:
            raise SingularBlockGram(f"block {i}: {exc}") from exc
        w = linalg.cholesky_solve(l, resid_blk)
        beta = float(resid_blk @ w)
        rows_touched = int(part.blocks[i].size)
    state.x += rows.T @ w
    state.k += 1
    return StepReport(block=i, beta=beta, blocks_fetched=1,
                      rows_touched=rows_touched)


def gbcd_bs_step(state: SolverState, access, r: int,
                 diag: np.ndarray) -> StepReport:
    """Backward-selection variant: take the r coordinates with the largest
    single-coordinate scores (grad_i^2 / P_ii, ties toward the lower index),
    factor that submatrix fresh, and update them jointly. The row fetch is
    non-contiguous, which is exactly the cost this variant documents."""
    if not 1 <= r < access.n:
        raise InvalidShape(f"r={r} out of range for n={access.n}")
    scores = state.grad * state.grad / diag
    sigma = np.sort(np.argsort(-scores, kind="stable")[:r])
    rows, blocks_touched = access.fetch_rows(sigma)
    sub = np.ascontiguousarray(rows[:, sigma])
    sub = (sub + sub.T) / 2.0
    l = linalg.cholesky(sub)
    rhs = access.q[sigma] - rows @ state.x
    alpha = linalg.cholesky_solve(l, rhs)
    state.x[sigma] += alpha
    state.grad += rows.T @ alpha
    state.k += 1
    return StepReport(block=-1, beta=float(rhs @ alpha),
                      blocks_fetched=int(blocks_touched), rows_touched=int(r))


def steepest_descent_step(state: SolverState, access) -> StepReport:
    """Exact line search along the fresh negative gradient; two full passes."""
    g = access.matvec(state.x) - access.q
    gg = float(g @ g)
    if gg == 0.0:
        state.grad = g
        state.k += 1
        return StepReport(block=-1, beta=math.nan, blocks_fetched=0,
                          rows_touched=access.n)
    w = access.matvec(g)
    gw = float(g @ w)
    if gw <= 0.0:
        raise NumericalError(f"nonpositive curvature g^T P g = {gw:g}")
    t = gg / gw
    state.x -= t * g
    state.grad = g - t * w
    state.k += 1
    return StepReport(block=-1, beta=math.nan, blocks_fetched=0,
                      rows_touched=access.n)


def conjugate_gradient_step(state: SolverState, access) -> StepReport:
    """Standard CG recurrence on P x = q; one full pass per iteration."""
    if state.cg_r is None:
        state.cg_r = access.q - access.matvec(state.x)
        state.cg_p = state.cg_r.copy()
        state.cg_rr = float(state.cg_r @ state.cg_r)
    if state.cg_rr == 0.0:
        state.grad = -state.cg_r
        state.k += 1
        return StepReport(block=-1, beta=math.nan, blocks_fetched=0,
                          rows_touched=access.n)
    w = access.matvec(state.cg_p)
    pw = float(state.cg_p @ w)
    if pw <= 0.0:
        raise NumericalError(f"nonpositive curvature p^T P p = {pw:g}")
    a = state.cg_rr / pw
    state.x += a * state.cg_p
    state.cg_r -= a * w
    rr_new = float(state.cg_r @ state.cg_r)
    state.cg_p = state.cg_r + (rr_new / state.cg_rr) * state.cg_p
    state.cg_rr = rr_new
    state.grad = -state.cg_r
    state.k += 1
    return StepReport(block=-1, beta=math.nan, blocks_fetched=0,
                      rows_touched=access.n)


def dldr_step(prob: UqpProblem, state: SolverState, m: np.ndarray,
              objective: str, oracle: Oracle | None = None) -> np.ndarray:
    """Minimize f over the affine slice x + col(m).

    objective "two-norm" projects x_opt onto the slice (oracle required);
    "p-norm" minimizes f itself, which needs no oracle because
    M^T P (x_opt - x) = M^T q - M^T P x. When an oracle is supplied anyway,
    both evaluation routes are computed and must agree to 1e-10.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != prob.n or not 1 <= m.shape[1] <= prob.n:
        raise InvalidShape(f"direction matrix shape {m.shape} invalid for n={prob.n}")
    if objective == "two-norm":
        if oracle is None:
            raise InvalidStrategyConfig("two-norm objective needs an oracle")
        gram = m.T @ m
        gram = (gram + gram.T) / 2.0
        try:
            l = linalg.cholesky(gram)
        except NotPositiveDefinite as exc:
            raise RankDeficient(f"direction matrix is rank deficient: {exc}") from exc
        coef = linalg.cholesky_solve(l, m.T @ (oracle.x_opt - state.x))
    elif objective == "p-norm":
        p = prob.dense()
        pm = p @ m
        gram = m.T @ pm
        gram = (gram + gram.T) / 2.0
        try:
            l = linalg.cholesky(gram)
        except NotPositiveDefinite as exc:
            raise RankDeficient(f"direction matrix is rank deficient: {exc}") from exc
        rhs_free = m.T @ prob.q - pm.T @ state.x
        coef = linalg.cholesky_solve(l, rhs_free)
        if oracle is not None:
            rhs_oracle = m.T @ (p @ (oracle.x_opt - state.x))
            coef_oracle = linalg.cholesky_solve(l, rhs_oracle)
            gap = float(np.max(np.abs(m @ (coef - coef_oracle))))
            if gap > tol.DLDR_EQ_ATOL:
                raise NumericalError(
                    f"oracle and oracle-free routes disagree by {gap:g}")
    else:
        raise InvalidStrategyConfig(f"unknown dldr objective {objective!r}")
    state.x = state.x + m @ coef
    state.k += 1
    return state.x


# ---------------------------------------------------------------------------
# Run driver


@dataclass
class SolveConfig:
    """Method selection plus everything needed to reproduce a run."""

    method: str
    partition: Partition | None = None
    strategy: str | None = None
    seed: int = 0
    x0: np.ndarray | None = None
    top_rows: int | None = None
    allow_non_hdc: bool = False
    rho: int | None = None
    precompute_workers: int = 1


@dataclass
class StopRule:
    """Stop at max_iters, or earlier when ||grad|| <= grad_rtol * ||q||
    (checked every check_every iterations for methods without a maintained
    gradient) or when the oracle-backed error drops below target_error."""

    max_iters: int
    grad_rtol: float | None = None
    target_error: float | None = None
    check_every: int | None = None


@dataclass
class SolveResult:
    x: np.ndarray
    converged: bool
    reason: str
    iterations: int
    trace: Trace
    state: SolverState
    reports: list = field(default_factory=list)


def run(prob: UqpProblem, config: SolveConfig, stop: StopRule,
        oracle: Oracle | None = None, metrics: str = "auto",
        keep_reports: bool = False) -> SolveResult:
    """Drive one solver run and collect its trace.

    metrics: "auto" picks the O(n) maintained-gradient route for the BCD
    family and the exact O(n^2) quadratic form otherwise; "exact" forces
    the quadratic form (audit mode); "grad" forces the fast route; "none"
    records NaN errors. Metric evaluation bypasses the access counters so
    audits of per-iteration fetches stay truthful.
    """
    if config.method not in ALL_METHODS:
        raise InvalidStrategyConfig(f"unknown method {config.method!r}")
    access, part = _make_access(prob, config)
    _check_envelope(config, part, prob.n)

    state = _init_state(prob, config, access)
    stepper, family = _make_stepper(prob, config, access, part, state)

    mode = _resolve_metrics(metrics, family, oracle)
    e0_pnormsq = e0_2norm = None
    pnormsq_prev = None
    if oracle is not None:
        diff0 = state.x - oracle.x_opt
        e0_2norm = float(np.linalg.norm(diff0))
        e0_pnormsq = max(float(diff0 @ access.matvec_uncounted(diff0)), 0.0)
        pnormsq_prev = e0_pnormsq

    trace = Trace()
    reports: list[StepReport] = []
    t0 = time.perf_counter_ns()
    if oracle is not None:
        trace.append(0, 0, _norm1(e0_pnormsq, e0_pnormsq, sqrt=True),
                     _norm1(e0_2norm, e0_2norm), 0.5 * e0_pnormsq,
                     -1, math.nan, 0, 0)
    else:
        trace.append(0, 0, math.nan, math.nan, math.nan, -1, math.nan, 0, 0)

    q_norm = float(np.linalg.norm(access.q))
    check_every = stop.check_every
    if check_every is None:
        check_every = max(1, math.ceil(prob.n / part.d)) if part is not None else 1

    converged = False
    reason = "max_iters"
    while True:
        hit, why = _stop_now(state, access, stop, q_norm, check_every,
                             oracle, pnormsq_prev, e0_pnormsq)
        if hit:
            converged = True
            reason = why
            break
        if state.k >= stop.max_iters:
            break
        fetches_before = access.access_counter
        report = stepper(state)
        report.blocks_fetched = access.access_counter - fetches_before
        if not np.all(np.isfinite(state.x)):
            raise NonFinite(f"iterate left finite range at k={state.k}")
        e_p = e_2 = f_gap = math.nan
        if oracle is not None:
            pnormsq, e_p, e_2, f_gap = _measure(state, access, oracle, mode,
                                                e0_pnormsq, e0_2norm)
            report.delta_pnormsq = pnormsq_prev - pnormsq
            pnormsq_prev = pnormsq
        trace.append(state.k, time.perf_counter_ns() - t0, e_p, e_2, f_gap,
                     report.block, report.beta, report.blocks_fetched,
                     report.rows_touched)
        if keep_reports:
            reports.append(report)

    return SolveResult(x=state.x, converged=converged, reason=reason,
                       iterations=state.k, trace=trace, state=state,
                       reports=reports)


def _norm1(val, e0, sqrt: bool = False):
    # normalized error with a zero-start guard
    if e0 == 0.0:
        return 0.0
    return math.sqrt(max(val, 0.0) / e0) if sqrt else val / e0


def _measure(state, access, oracle, mode, e0_pnormsq, e0_2norm):
    diff = state.x - oracle.x_opt
    if mode == "grad":
        pnormsq = max(float(state.grad @ diff), 0.0)
    elif mode == "exact":
        pnormsq = max(float(diff @ access.matvec_uncounted(diff)), 0.0)
    else:
        return math.nan, math.nan, math.nan, math.nan
    e_p = _norm1(pnormsq, e0_pnormsq, sqrt=True)
    e_2 = _norm1(float(np.linalg.norm(diff)), e0_2norm)
    return pnormsq, e_p, e_2, 0.5 * pnormsq


def _resolve_metrics(metrics: str, family: str, oracle) -> str:
    if metrics not in ("auto", "grad", "exact", "none"):
        raise InvalidStrategyConfig(f"unknown metrics mode {metrics!r}")
    if oracle is None:
        return "none"
    if metrics == "auto":
        return "grad" if family in ("bcd", "direction") else "exact"
    return metrics


def _stop_now(state, access, stop, q_norm, check_every, oracle,
              pnormsq_prev, e0_pnormsq):
    if oracle is not None and stop.target_error is not None and e0_pnormsq is not None:
        if e0_pnormsq == 0.0:
            return True, "target_error"
        if math.sqrt(max(pnormsq_prev, 0.0) / e0_pnormsq) < stop.target_error:
            return True, "target_error"
    if stop.grad_rtol is not None:
        if state.grad is not None:
            if float(np.linalg.norm(state.grad)) <= stop.grad_rtol * q_norm:
                return True, "grad_tol"
        elif state.k % check_every == 0:
            g = access.matvec_uncounted(state.x) - access.q
            if float(np.linalg.norm(g)) <= stop.grad_rtol * q_norm:
                return True, "grad_tol"
    return False, ""


def _make_access(prob: UqpProblem, config: SolveConfig):
    if prob.in_memory:
        part = config.partition
        access = MatrixAccess(prob.p, prob.q, part)
    else:
        access = StoreAccess(prob.p)
        part = access.partition
        if config.partition is not None and not (config.partition == part):
            raise InvalidPartition("config partition differs from the store's")
    if config.method in BLOCK_METHODS and part is None:
        raise InvalidPartition(f"method {config.method!r} needs a partition")
    return access, part


def _check_envelope(config: SolveConfig, part, n: int) -> None:
    # the non-HDC override gates both the O(n^2) methods and oversize blocks
    quadratic = config.method in ("sd", "cg") or (
        config.method == "bk" and config.strategy == "greedy")
    if quadratic and not config.allow_non_hdc:
        what = config.method if config.strategy is None else (
            f"{config.method} with the {config.strategy} strategy")
        raise HdcViolation(
            f"{what} costs O(n^2) per iteration; "
            "pass allow_non_hdc to run it anyway")
    if config.method == "bk" and config.strategy == "greedy" and n > GREEDY_BK_CAP:
        raise TooLargeForDirect(
            f"greedy bk rescoring is capped at n={GREEDY_BK_CAP}, got {n}")
    if config.method in BLOCK_METHODS and part is not None:
        limits = HdcLimits(rho=config.rho if config.rho is not None else n)
        if not hdc_admissible(part, limits, config.method) and not config.allow_non_hdc:
            cap = limits.d_cap(n, config.method)
            raise HdcViolation(
                f"block size {part.d} is not below the {config.method} cap "
                f"{cap:g} for n={n}; pass allow_non_hdc to run it anyway")
    if config.method == "gbcd-bs" and config.top_rows is not None:
        limits = HdcLimits(rho=config.rho if config.rho is not None else n)
        cap = limits.d_cap(n, "gbcd")
        if config.top_rows >= cap and not config.allow_non_hdc:
            raise HdcViolation(
                f"row count {config.top_rows} is not below the cap {cap:g} "
                f"for n={n}; pass allow_non_hdc to run it anyway")


def _init_state(prob: UqpProblem, config: SolveConfig, access) -> SolverState:
    if config.x0 is None:
        x = np.zeros(prob.n, dtype=np.float64)
        grad = -access.q.copy()
    else:
        x = np.array(config.x0, dtype=np.float64, copy=True)
        if x.shape != (prob.n,):
            raise DimensionMismatch(f"x0 has shape {x.shape}, expected ({prob.n},)")
        # one-time full pass; afterwards the gradient is maintained
        grad = access.matvec_uncounted(x) - access.q
    if config.method in ("bk",):
        grad = None
    return SolverState(x=x, grad=grad, k=0,
                       rng=np.random.default_rng(config.seed))


def prepare_inverses(prob: UqpProblem, part: Partition,
                     workers: int = 1) -> BlockInverses:
    """Block inverses for an in-memory problem (stores precompute instead)."""
    invs = [linalg.spd_invert(np.ascontiguousarray(prob.p[np.ix_(blk, blk)]))
            for blk in part.blocks]
    return BlockInverses(part, invs)


def _make_stepper(prob, config, access, part, state):
    method = config.method
    if method in ("gbcd", "bcd"):
        if isinstance(access, StoreAccess):
            store = access.store
            if not store.has_inverses:
                store.precompute_inverses(config.precompute_workers)
            inverses = store.load_inverses()
        else:
            inverses = prepare_inverses(prob, part)
        if method == "gbcd":
            if config.strategy not in (None, "greedy"):
                raise InvalidStrategyConfig("gbcd takes no strategy")
            return (lambda st: gbcd_step(st, access, inverses)), "bcd"
        strategy = _bcd_strategy(config.strategy or "round-robin", inverses)
        return (lambda st: bcd_step(st, access, inverses, strategy)), "bcd"
    if method == "bk":
        strategy = _bk_strategy(config.strategy or "round-robin", access)
        gram_factors = None
        if isinstance(strategy, GreedyBk):
            gram_factors = []
            for i in range(part.m):
                rows, _ = access.fetch_block(i)
                gram = rows @ rows.T
                gram = (gram + gram.T) / 2.0
                try:
                    gram_factors.append(linalg.cholesky(gram))
                except NotPositiveDefinite as exc:
                    raise SingularBlockGram(f"block {i}: {exc}") from exc
        return (lambda st: bk_step(st, access, strategy, gram_factors)), "bk"
    if method == "gbcd-bs":
        if config.top_rows is None:
            raise InvalidStrategyConfig("gbcd-bs needs top_rows")
        diag = access.diagonal()
        r = config.top_rows
        return (lambda st: gbcd_bs_step(st, access, r, diag)), "bcd"
    if method == "sd":
        return (lambda st: steepest_descent_step(st, access)), "direction"
    if method == "cg":
        return (lambda st: conjugate_gradient_step(st, access)), "direction"
    raise InvalidStrategyConfig(f"unknown method {method!r}")
