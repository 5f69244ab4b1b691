"""Benchmark harness: trace CSVs, the distributed-cost replay, and tiny
versions of the three experiments."""
import math

import numpy as np
import pytest

from uqpkit.bench import (DistCostReport, Experiment1Config, Experiment2Config,
                          Experiment3Config, experiment1, experiment2,
                          experiment3, iterations_to_target, save_result,
                          simulate_distributed)
from uqpkit.errors import InvalidAssignment, IoError
from uqpkit.trace import CSV_HEADER, Trace, read_csv, write_csv


def _block_trace(blocks, rows_per_step):
    """A minimal block-method trace: k=0 baseline then one row per step."""
    t = Trace()
    t.append(0, 0, 1.0, 1.0, 0.5, -1, math.nan, 0, 0)
    for k, b in enumerate(blocks, start=1):
        t.append(k, k * 10, 1.0 / (k + 1), 1.0 / (k + 1), 0.1, b, 0.2, 1,
                 rows_per_step)
    return t


def test_iterations_to_target():
    t = Trace()
    for k, e in enumerate([1.0, 0.5, 0.2, 0.09, 0.01]):
        t.append(k, 0, e, e, 0.0, -1, math.nan, 0, 0)
    assert iterations_to_target(t, 0.1) == 3.0
    assert iterations_to_target(t, 0.5) == 2.0  # strict: 0.5 is not < 0.5
    assert iterations_to_target(t, 1e-9) == math.inf


def test_simulate_all_on_one_node_moves_nothing():
    t = _block_trace([0, 1, 2, 1, 0], rows_per_step=4)
    rep = simulate_distributed(t, {0: 0, 1: 0, 2: 0}, n_nodes=3, n=12)
    assert rep.transfer_units == 0
    assert rep.compute_units == 5 * 12 * 4
    np.testing.assert_allclose(rep.utilization, [1.0, 0.0, 0.0])


def test_simulate_alternating_pays_every_step():
    # blocks alternate between two nodes; x starts on node 0 and the first
    # step is served by node 1, so every one of the K steps pays 2n
    k, n = 7, 10
    t = _block_trace([1, 0] * 3 + [1], rows_per_step=2)
    rep = simulate_distributed(t, [0, 1], n_nodes=2, n=n)
    assert rep.transfer_units == 2 * n * k
    assert rep.compute_units == k * n * 2
    assert rep.utilization.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(rep.utilization, [3 / 7, 4 / 7])
    assert list(rep.timeline) == [1, 0, 1, 0, 1, 0, 1]


def test_simulate_default_n_uses_widest_step():
    t = _block_trace([0, 1], rows_per_step=6)
    rep = simulate_distributed(t, [0, 0], n_nodes=1)
    assert rep.compute_units == 2 * 6 * 6


def test_simulate_rejects_bad_assignments():
    t = _block_trace([0, 1, 2], rows_per_step=2)
    with pytest.raises(InvalidAssignment):
        simulate_distributed(t, {0: 0, 1: 0}, n_nodes=2)  # block 2 unmapped
    with pytest.raises(InvalidAssignment):
        simulate_distributed(t, {0: 0, 1: 0, 2: 5}, n_nodes=2)  # node out of range
    with pytest.raises(InvalidAssignment):
        simulate_distributed(t, {0: 0, 1: 0, 2: -1}, n_nodes=2)
    with pytest.raises(InvalidAssignment):
        simulate_distributed(t, {0: 0}, n_nodes=0)
    direction = Trace()
    direction.append(0, 0, 1.0, 1.0, 0.5, -1, math.nan, 0, 0)
    direction.append(1, 5, 0.5, 0.5, 0.1, -1, math.nan, 0, 8)
    with pytest.raises(InvalidAssignment):
        simulate_distributed(direction, {0: 0}, n_nodes=1)


def test_trace_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(3)
    t = Trace()
    t.append(0, 0, 1.0, 1.0, 0.5, -1, math.nan, 0, 0)
    for k in range(1, 40):
        t.append(k, k * 137, float(rng.random()), float(rng.random()),
                 float(rng.standard_normal()), int(rng.integers(8)),
                 float(rng.random()), 1, 4)
    path = tmp_path / "t.csv"
    write_csv(t, path)
    raw = path.read_bytes()
    assert raw.startswith(CSV_HEADER.encode("ascii") + b"\n")
    assert b"\r" not in raw
    cols = read_csv(path)
    for name in ("e_pnorm", "e_2norm", "f_gap", "beta"):
        got, want = cols[name], t.column(name)
        # 17 significant digits: float64 survives the text round trip
        assert np.array_equal(got[1:], want[1:])
    assert math.isnan(cols["beta"][0])
    assert np.array_equal(cols["k"], np.arange(40, dtype=np.float64))


def test_read_csv_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,trace\n1,2,3\n")
    with pytest.raises(IoError):
        read_csv(bad)
    short = tmp_path / "short.csv"
    short.write_text(CSV_HEADER + "\n1,2,3\n")
    with pytest.raises(IoError):
        read_csv(short)
    with pytest.raises(IoError):
        read_csv(tmp_path / "absent.csv")


TINY1 = Experiment1Config(n=64, block=8, target=1e-2, block_budget=400,
                          sd_budget=60, cg_budget=120, seeds=(0, 1))
TINY2 = Experiment2Config(n=32, heavy_count=4, factor=100.0, budget=120,
                          n_runs=3, seeds=(0, 1))
TINY3 = Experiment3Config(n=32, heavy_count=4, factor=100.0, block=4,
                          target=1e-2, budget=4000, seeds=(0, 1))


def test_experiment1_tiny_smoke(tmp_path):
    res = experiment1(TINY1, workdir=tmp_path)
    assert res.name == "exp1"
    labels = {mr.label for mr in res.runs}
    assert {"gbcd", "gbcd-bs", "bcd-rr", "bcd-rand-eig", "sd", "cg"} <= labels
    assert math.isfinite(res.summary["gbcd"]["iters_median"])
    # block methods touch block-many rows per step; full methods touch n
    for mr in res.runs:
        rows = np.asarray(mr.trace.rows_touched[1:])
        if mr.label in ("sd", "cg"):
            assert np.all(rows == TINY1.n)
        else:
            assert np.all(rows == TINY1.block), mr.label
    assert isinstance(res.table, str) and "gbcd" in res.table


def test_experiment2_tiny_smoke():
    res = experiment2(TINY2)
    assert res.name == "exp2"
    summ = res.summary
    for key in ("bk-rand-rownorm_tau_mass_median", "bcd-rand-diag_tau_mass_median"):
        assert 0.0 <= summ[key] <= 1.0, key
    assert len(summ["per_seed"]) == len(TINY2.seeds)
    # greedy beats the randomized samplers on final error at equal budget
    assert (summ["gbcd_final_e_2norm_median"]
            <= summ["bk-rand-rownorm_mean_final_e_2norm_median"] + 1e-12)
    labels = {mr.label for mr in res.runs}
    assert {"gbcd", "bk-rand-rownorm-mean", "bcd-rand-diag-mean"} <= labels


def test_experiment3_tiny_smoke():
    res = experiment3(TINY3)
    assert res.name == "exp3"
    summ = res.summary
    for label in ("gbcd-dominant", "gbcd-random"):
        assert len(summ[label]["iters_per_seed"]) == len(TINY3.seeds)
        assert math.isfinite(summ[label]["bound_exact_median"])
        assert 0.0 < summ[label]["bound_exact_median"] < 1.0
        assert summ[label]["dominance_gap_median"] >= 0.0
        rates = [mr.rate for mr in res.runs if mr.label == label]
        assert all(r is not None for r in rates)
    # smaller gap = closer to block dominance; isolating the heavy rows
    # keeps the huge couplings on the block diagonal
    assert summ["gbcd-dominant"]["dominance_gap_median"] < \
        summ["gbcd-random"]["dominance_gap_median"]


def test_save_result_writes_named_files(tmp_path):
    res = experiment3(TINY3)
    paths = save_result(res, tmp_path / "out")
    names = sorted(p.name for p in paths)
    assert "exp3_summary.txt" in names
    assert "exp3_seed0_gbcd-dominant.csv" in names
    assert "exp3_seed1_gbcd-random.csv" in names
    for p in paths:
        assert p.exists()
    # the per-run CSVs parse back
    cols = read_csv(tmp_path / "out" / "exp3_seed0_gbcd-dominant.csv")
    assert cols["k"][0] == 0.0
