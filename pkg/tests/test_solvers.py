"""Solver steps, strategies, the run driver, and resource-envelope gates."""
import math

import numpy as np
import pytest

from conftest import planted_problem, spd_matrix
from uqpkit import solvers
from uqpkit.blockstore import BlockStore, write_store
from uqpkit.errors import (DimensionMismatch, HdcViolation, InvalidPartition,
                           InvalidShape, InvalidStrategyConfig, RankDeficient,
                           TooLargeForDirect)
from uqpkit.partition import contiguous_partition, random_partition
from uqpkit.problem import UqpProblem, gen_random_spd, gen_scaled_rows, solve_direct
from uqpkit.solvers import (MatrixAccess, RoundRobin, SolveConfig, SolverState,
                            StopRule, bcd_step, bk_step, dldr_step, gbcd_step,
                            parallel_score_blocks, prepare_inverses, run,
                            score_blocks)


def _state(prob, x):
    x = np.array(x, dtype=np.float64)
    return SolverState(x=x, grad=prob.p @ x - prob.q, k=0,
                       rng=np.random.default_rng(0))


def test_score_blocks_singleton_values():
    prob = UqpProblem(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    part = contiguous_partition(2, 1)
    invs = prepare_inverses(prob, part)
    state = _state(prob, [0.0, 0.0])
    np.testing.assert_allclose(score_blocks(state, invs), [2.0, 4.0])


def test_gbcd_hand_run():
    # diag(2,4), q=(2,4): greedy takes block 1 (score 4) then block 0 (score 2)
    prob = UqpProblem(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    res = run(prob, SolveConfig(method="gbcd", partition=contiguous_partition(2, 1)),
              StopRule(max_iters=10, grad_rtol=1e-14),
              oracle=solve_direct(prob), metrics="exact")
    assert res.converged and res.reason == "grad_tol"
    assert res.iterations == 2
    assert list(res.trace.block) == [-1, 1, 0]
    np.testing.assert_allclose(res.trace.beta[1:], [4.0, 2.0], rtol=1e-12)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
    assert res.trace.e_pnorm[0] == 1.0
    assert res.trace.e_pnorm[-1] < 1e-12


def test_gbcd_tie_breaks_to_lowest_block():
    prob = UqpProblem(np.diag([2.0, 2.0]), np.array([2.0, 2.0]))
    res = run(prob, SolveConfig(method="gbcd", partition=contiguous_partition(2, 1)),
              StopRule(max_iters=1), oracle=solve_direct(prob))
    assert res.trace.block[1] == 0


@pytest.mark.parametrize("seed", range(4))
def test_gbcd_step_decrease_matches_score(seed):
    prob, _ = planted_problem(32, seed)
    part = random_partition(32, 4, seed)
    res = run(prob, SolveConfig(method="gbcd", partition=part),
              StopRule(max_iters=40), oracle=solve_direct(prob),
              metrics="exact", keep_reports=True)
    for rep in res.reports:
        assert rep.delta_pnormsq is not None
        assert abs(rep.delta_pnormsq - rep.beta) <= 1e-8 * (1 + rep.beta)


def test_gbcd_scores_sum_to_initial_error():
    # running to the solution spends exactly ||x0 - x_opt||_P^2 of score
    prob, _ = planted_problem(24, seed=2)
    part = contiguous_partition(24, 4)
    res = run(prob, SolveConfig(method="gbcd", partition=part),
              StopRule(max_iters=5000, grad_rtol=1e-13),
              oracle=solve_direct(prob), keep_reports=True)
    assert res.converged
    oracle = solve_direct(prob)
    e0 = oracle.x_opt @ (prob.p @ oracle.x_opt)
    total = sum(rep.beta for rep in res.reports)
    assert abs(total - e0) <= 1e-7 * (1 + e0)


def test_gradient_maintenance_matches_recompute():
    prob, _ = planted_problem(48, seed=3)
    part = random_partition(48, 6, seed=1)
    res = run(prob, SolveConfig(method="gbcd", partition=part),
              StopRule(max_iters=150))
    drift = np.max(np.abs(res.state.grad - (prob.p @ res.x - prob.q)))
    assert drift <= 1e-10 * (1 + np.max(np.abs(prob.q)))


def test_bk_hand_step():
    # singleton Kaczmarz projection: x1 = P_0^T (P_0 P_0^T)^-1 q_0
    prob = UqpProblem(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    access = MatrixAccess(prob.p, prob.q, contiguous_partition(2, 1))
    state = SolverState(x=np.zeros(2), grad=None, k=0,
                        rng=np.random.default_rng(0))
    rep = bk_step(state, access, RoundRobin())
    np.testing.assert_allclose(state.x, [1.2, 0.6], atol=1e-14)
    assert rep.block == 0 and rep.rows_touched == 1


@pytest.mark.parametrize("seed", range(3))
def test_bk_projection_pythagoras(seed):
    # each projection is orthogonal: the squared 2-norm error drops by
    # exactly the squared step length
    prob, x_star = planted_problem(20, seed)
    part = random_partition(20, 4, seed)
    access = MatrixAccess(prob.p, prob.q, part)
    state = SolverState(x=np.zeros(20), grad=None, k=0,
                        rng=np.random.default_rng((seed, 5)))
    strategy = RoundRobin()
    for _ in range(30):
        before = state.x.copy()
        err_before = np.sum((before - x_star) ** 2)
        bk_step(state, access, strategy)
        err_after = np.sum((state.x - x_star) ** 2)
        step_sq = np.sum((state.x - before) ** 2)
        assert err_after <= err_before + 1e-10
        assert abs(err_before - err_after - step_sq) <= 1e-8 * (1 + err_before)


def test_dldr_equivalences_over_random_triples():
    rng = np.random.default_rng(77)
    for trial in range(50):
        n, d = 16, 4
        prob, _ = planted_problem(n, 300 + trial)
        oracle = solve_direct(prob)
        part = contiguous_partition(n, d)
        i = int(rng.integers(part.m))
        x = rng.standard_normal(n)
        blk = part.blocks[i]

        # block Kaczmarz against its two-norm slice counterpart
        access = MatrixAccess(prob.p, prob.q, part)
        st_bk = SolverState(x=x.copy(), grad=None, k=0,
                            rng=np.random.default_rng(1))
        st_bk.rr_cursor = i
        bk_step(st_bk, access, RoundRobin())
        st_dl = SolverState(x=x.copy(), grad=None, k=0,
                            rng=np.random.default_rng(1))
        dldr_step(prob, st_dl, prob.p[blk, :].T, "two-norm", oracle)
        np.testing.assert_allclose(st_dl.x, st_bk.x, atol=1e-10)

        # block coordinate descent against its P-norm slice counterpart
        invs = prepare_inverses(prob, part)
        st_cd = _state(prob, x)
        st_cd.rr_cursor = i
        bcd_step(st_cd, MatrixAccess(prob.p, prob.q, part), invs, RoundRobin())
        st_dl2 = SolverState(x=x.copy(), grad=None, k=0,
                             rng=np.random.default_rng(1))
        m_cols = np.zeros((n, d))
        m_cols[blk, np.arange(d)] = 1.0
        dldr_step(prob, st_dl2, m_cols, "p-norm", oracle)
        np.testing.assert_allclose(st_dl2.x, st_cd.x, atol=1e-10)


def test_dldr_full_identity_solves_in_one_step():
    prob, _ = planted_problem(12, seed=9)
    oracle = solve_direct(prob)
    state = SolverState(x=np.zeros(12), grad=None, k=0,
                        rng=np.random.default_rng(0))
    dldr_step(prob, state, np.eye(12), "p-norm")
    np.testing.assert_allclose(state.x, oracle.x_opt, atol=1e-8)


def test_dldr_validation():
    prob, _ = planted_problem(8, seed=0)
    state = SolverState(x=np.zeros(8), grad=None, k=0,
                        rng=np.random.default_rng(0))
    with pytest.raises(InvalidStrategyConfig):
        dldr_step(prob, state, np.eye(8)[:, :2], "two-norm")  # oracle missing
    with pytest.raises(InvalidStrategyConfig):
        dldr_step(prob, state, np.eye(8)[:, :2], "sup-norm")
    with pytest.raises(InvalidShape):
        dldr_step(prob, state, np.eye(4)[:, :2], "p-norm")
    dup = np.zeros((8, 2))
    dup[0, 0] = dup[0, 1] = 1.0  # rank-1 direction matrix
    with pytest.raises(RankDeficient):
        dldr_step(prob, state, dup, "p-norm")


def test_gbcd_bs_r1_equals_singleton_gbcd():
    prob, _ = planted_problem(36, seed=5)
    oracle = solve_direct(prob)
    stop = StopRule(max_iters=60)
    bs = run(prob, SolveConfig(method="gbcd-bs", top_rows=1),
             stop, oracle=oracle, metrics="exact")
    sg = run(prob, SolveConfig(method="gbcd",
                               partition=contiguous_partition(36, 1)),
             stop, oracle=oracle, metrics="exact")
    np.testing.assert_allclose(bs.x, sg.x, atol=1e-12)
    np.testing.assert_allclose(bs.trace.e_pnorm, sg.trace.e_pnorm, atol=1e-12)


def test_gbcd_bs_rejects_bad_r():
    prob, _ = planted_problem(16, seed=1)
    with pytest.raises(InvalidShape):
        run(prob, SolveConfig(method="gbcd-bs", top_rows=0, allow_non_hdc=True),
            StopRule(max_iters=1))
    with pytest.raises(InvalidShape):
        run(prob, SolveConfig(method="gbcd-bs", top_rows=16, allow_non_hdc=True),
            StopRule(max_iters=1))
    with pytest.raises(InvalidStrategyConfig):
        run(prob, SolveConfig(method="gbcd-bs"), StopRule(max_iters=1))


def test_sd_identity_converges_in_one_step():
    x_star = np.array([1.0, -2.0, 3.0])
    prob = UqpProblem(np.eye(3), x_star.copy())
    res = run(prob, SolveConfig(method="sd", allow_non_hdc=True),
              StopRule(max_iters=5, grad_rtol=1e-12), oracle=solve_direct(prob))
    assert res.converged and res.iterations == 1
    np.testing.assert_allclose(res.x, x_star, atol=1e-12)
    assert res.trace.rows_touched[1] == 3


def test_sd_monotone_in_pnorm():
    prob, _ = planted_problem(24, seed=8)
    res = run(prob, SolveConfig(method="sd", allow_non_hdc=True),
              StopRule(max_iters=60), oracle=solve_direct(prob), metrics="exact")
    e = res.trace.e_pnorm
    assert all(e[i + 1] <= e[i] + 1e-10 for i in range(len(e) - 1))


def test_cg_terminates_and_beats_sd():
    prob, _ = planted_problem(40, seed=4)
    oracle = solve_direct(prob)
    cg = run(prob, SolveConfig(method="cg", allow_non_hdc=True),
             StopRule(max_iters=120, grad_rtol=1e-10), oracle=oracle,
             metrics="exact")
    assert cg.converged
    assert cg.iterations <= 2 * 40  # finite termination modulo rounding
    assert cg.trace.e_pnorm[-1] < 1e-8
    sd = run(prob, SolveConfig(method="sd", allow_non_hdc=True),
             StopRule(max_iters=cg.iterations), oracle=oracle, metrics="exact")
    assert cg.trace.e_pnorm[-1] <= sd.trace.e_pnorm[-1]


def test_stop_rules():
    prob = UqpProblem(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    oracle = solve_direct(prob)
    part = contiguous_partition(2, 1)
    res = run(prob, SolveConfig(method="gbcd", partition=part), StopRule(max_iters=0))
    assert res.iterations == 0 and not res.converged and res.reason == "max_iters"
    res = run(prob, SolveConfig(method="gbcd", partition=part),
              StopRule(max_iters=50, target_error=1e-12), oracle=oracle)
    assert res.converged and res.reason == "target_error"
    assert res.iterations == 2


def test_bk_grad_rtol_checks_periodically():
    prob, _ = planted_problem(18, seed=6)
    part = contiguous_partition(18, 3)
    res = run(prob, SolveConfig(method="bk", partition=part),
              StopRule(max_iters=4000, grad_rtol=1e-10, check_every=6))
    assert res.converged and res.reason == "grad_tol"
    # stop checks ran on the uncounted path: every fetch in the trace is real
    assert res.iterations % 6 == 0
    fetched = np.asarray(res.trace.blocks_fetched[1:])
    assert np.all(fetched == 1)


def test_run_rejects_unknown_method_and_strategy():
    prob, _ = planted_problem(8, seed=0)
    part = contiguous_partition(8, 2)
    with pytest.raises(InvalidStrategyConfig):
        run(prob, SolveConfig(method="newton", partition=part), StopRule(max_iters=1))
    with pytest.raises(InvalidStrategyConfig):
        run(prob, SolveConfig(method="bcd", partition=part, strategy="magic"),
            StopRule(max_iters=1))
    with pytest.raises(InvalidStrategyConfig):
        run(prob, SolveConfig(method="bcd", partition=part, strategy="rand-diag"),
            StopRule(max_iters=1))  # needs singletons
    with pytest.raises(InvalidPartition):
        run(prob, SolveConfig(method="gbcd"), StopRule(max_iters=1))


def test_hdc_envelope_gates():
    prob, _ = planted_problem(64, seed=2)
    part8 = contiguous_partition(64, 8)  # 8 is not < sqrt(64)
    with pytest.raises(HdcViolation):
        run(prob, SolveConfig(method="gbcd", partition=part8), StopRule(max_iters=1))
    ok = run(prob, SolveConfig(method="gbcd", partition=part8, allow_non_hdc=True),
             StopRule(max_iters=1))
    assert ok.iterations == 1
    # BCD's milder n^(2/3) cap admits the same partition
    ok2 = run(prob, SolveConfig(method="bcd", partition=part8), StopRule(max_iters=1))
    assert ok2.iterations == 1
    with pytest.raises(HdcViolation):
        run(prob, SolveConfig(method="sd"), StopRule(max_iters=1))
    with pytest.raises(HdcViolation):
        run(prob, SolveConfig(method="cg"), StopRule(max_iters=1))
    with pytest.raises(HdcViolation):
        run(prob, SolveConfig(method="bk", partition=contiguous_partition(64, 4),
                              strategy="greedy"), StopRule(max_iters=1))
    # rho tightens the cap below the dimension rule
    with pytest.raises(HdcViolation):
        run(prob, SolveConfig(method="gbcd", partition=contiguous_partition(64, 4),
                              rho=4), StopRule(max_iters=1))


def test_greedy_bk_size_cap(monkeypatch):
    prob, _ = planted_problem(32, seed=1)
    monkeypatch.setattr(solvers, "GREEDY_BK_CAP", 16)
    with pytest.raises(TooLargeForDirect):
        run(prob, SolveConfig(method="bk", partition=contiguous_partition(32, 4),
                              strategy="greedy", allow_non_hdc=True),
            StopRule(max_iters=1))


def test_x0_validation_and_use():
    prob, _ = planted_problem(10, seed=7)
    part = contiguous_partition(10, 2)
    with pytest.raises((InvalidShape, DimensionMismatch)):
        run(prob, SolveConfig(method="gbcd", partition=part, x0=np.ones(9)),
            StopRule(max_iters=1))
    oracle = solve_direct(prob)
    res = run(prob, SolveConfig(method="gbcd", partition=part,
                                x0=oracle.x_opt.copy()),
              StopRule(max_iters=5, grad_rtol=1e-10), oracle=oracle)
    assert res.converged and res.iterations == 0


def test_weighted_random_is_seed_deterministic():
    prob, _ = planted_problem(30, seed=3)
    part = contiguous_partition(30, 3)
    cfg = SolveConfig(method="bcd", partition=part, strategy="rand-eig", seed=42)
    a = run(prob, cfg, StopRule(max_iters=40))
    b = run(prob, cfg, StopRule(max_iters=40))
    assert list(a.trace.block) == list(b.trace.block)
    c = run(prob, SolveConfig(method="bcd", partition=part,
                              strategy="rand-eig", seed=43),
            StopRule(max_iters=40))
    assert list(a.trace.block) != list(c.trace.block)


def test_parallel_score_blocks_bit_identical():
    prob, _ = planted_problem(40, seed=6)
    part = random_partition(40, 5, seed=2)
    invs = prepare_inverses(prob, part)
    state = _state(prob, np.random.default_rng(1).standard_normal(40))
    serial = score_blocks(state, invs)
    for workers in (1, 2, 3, 8, 100):
        par = parallel_score_blocks(state, invs, workers)
        assert np.array_equal(serial, par)


def test_store_and_memory_runs_agree():
    prob, _ = planted_problem(32, seed=11)
    part = contiguous_partition(32, 4)
    oracle = solve_direct(prob)
    mem = run(prob, SolveConfig(method="gbcd", partition=part),
              StopRule(max_iters=60), oracle=oracle, metrics="exact")
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        write_store(prob, part, tmp)
        sprob = UqpProblem(BlockStore.open(tmp), prob.q)
        st = run(sprob, SolveConfig(method="gbcd"), StopRule(max_iters=60),
                 oracle=oracle, metrics="exact")
    np.testing.assert_allclose(st.x, mem.x, atol=1e-12)
    np.testing.assert_allclose(st.trace.e_pnorm, mem.trace.e_pnorm, atol=1e-12)
    assert list(st.trace.block) == list(mem.trace.block)


def test_monotone_strategy_matrix_small():
    prob, x_star = planted_problem(27, seed=13)
    oracle = solve_direct(prob)
    part = contiguous_partition(27, 3)
    stop = StopRule(max_iters=80)
    bcd_family = [("gbcd", None), ("bcd", "round-robin"), ("bcd", "rand-eig")]
    for method, strat in bcd_family:
        res = run(prob, SolveConfig(method=method, partition=part, strategy=strat),
                  stop, oracle=oracle, metrics="exact")
        e = res.trace.e_pnorm
        assert all(e[i + 1] <= e[i] + 1e-10 for i in range(len(e) - 1)), (method, strat)
    for strat in ("round-robin", "rand-rownorm", "greedy"):
        res = run(prob, SolveConfig(method="bk", partition=part, strategy=strat,
                                    allow_non_hdc=True),
                  stop, oracle=oracle, metrics="exact")
        e2 = res.trace.e_2norm
        assert all(e2[i + 1] <= e2[i] + 1e-10 for i in range(len(e2) - 1)), strat
