"""Benchmark harness: three canned experiment reproductions at desk scale,
plus the distributed-handoff cost simulator.

Experiment 1 compares greedy block selection against round-robin and
eigenvalue-weighted randomized selection (and the dense SD/CG baselines) on
a block-dominant instance served from an on-disk store. Experiment 2 shows
why randomized row sampling stalls in the 2-norm when a few rows carry
almost all the mass. Experiment 3 shows the effect of the partition itself:
the same instance solved under a random partition and under one that
isolates the heavy rows, with the contraction-rate bounds for both.

Every experiment is deterministic in its seed list. Comparative summaries
are medians over the seeds, never single draws.
"""

from __future__ import annotations

import math
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uqpkit import tolerances as tol
from uqpkit.blockstore import write_store
from uqpkit.errors import InvalidAssignment
from uqpkit.partition import (
    Partition,
    RateReport,
    contiguous_partition,
    dominant_partition,
    random_partition,
    rate_bound,
)
from uqpkit.problem import (
    UqpProblem,
    gen_block_dominant,
    gen_scaled_rows,
    solve_direct,
)
from uqpkit.solvers import SolveConfig, StopRule, run
from uqpkit.trace import Trace, write_csv  # re-exported: write_csv

__all__ = [
    "Experiment1Config", "Experiment2Config", "Experiment3Config",
    "MethodRun", "ExperimentResult", "DistCostReport",
    "experiment1", "experiment2", "experiment3",
    "simulate_distributed", "save_result", "write_csv",
]


@dataclass
class MethodRun:
    """One solver run inside an experiment."""

    label: str
    seed: int
    trace: Trace
    iterations_to_target: float
    final_e_pnorm: float
    final_e_2norm: float
    rate: RateReport | None = None


@dataclass
class ExperimentResult:
    name: str
    runs: list
    summary: dict
    table: str


def iterations_to_target(trace: Trace, target: float) -> float:
    """First k with e_pnorm below target, or inf if the trace never gets
    there (reading the trace keeps this honest about capped runs)."""
    e = trace.column("e_pnorm")
    below = np.nonzero(e < target)[0]
    return float(trace.k[below[0]]) if below.size else math.inf


def _median(values) -> float:
    return float(statistics.median(values))


# ---------------------------------------------------------------------------
# Experiment 1: method comparison on a block-dominant instance


@dataclass
class Experiment1Config:
    n: int = 2048
    block: int = 64
    diag_scale: float = 10.0
    off_scale: float = 0.1
    target: float = 1e-3
    block_budget: int = 20000
    sd_budget: int = 1000
    cg_budget: int = 4000
    seeds: tuple = (0, 1, 2, 3, 4)


def experiment1(cfg: Experiment1Config | None = None,
                workdir=None) -> ExperimentResult:
    """Greedy vs round-robin vs randomized block selection vs SD/CG.

    Block methods run against the on-disk store; SD and CG run in memory
    (their cost is recorded as rows_touched = n per iteration either way).
    """
    cfg = cfg if cfg is not None else Experiment1Config()
    workdir = Path(workdir) if workdir is not None else Path(
        tempfile.mkdtemp(prefix="uqp-exp1-"))
    target_stop = StopRule(max_iters=cfg.block_budget, target_error=cfg.target)
    runs: list[MethodRun] = []
    for seed in cfg.seeds:
        prob = gen_block_dominant(cfg.n, cfg.block, cfg.diag_scale,
                                  cfg.off_scale, seed)
        oracle = solve_direct(prob, cap=max(cfg.n, tol.DIRECT_SOLVE_CAP))
        part = contiguous_partition(cfg.n, cfg.block)
        store = write_store(prob, part, workdir / f"seed_{seed}")
        sprob = UqpProblem(store, prob.q, prob.r)

        def on_store(label, **kw):
            store.reset_counters()
            res = run(sprob, SolveConfig(seed=seed, allow_non_hdc=True, **kw),
                      target_stop, oracle=oracle)
            runs.append(_method_run(label, seed, res, cfg.target))

        on_store("gbcd", method="gbcd")
        on_store("gbcd-bs", method="gbcd-bs", top_rows=cfg.block)
        on_store("bcd-rr", method="bcd", strategy="round-robin")
        on_store("bcd-rand-eig", method="bcd", strategy="rand-eig")
        for label, budget in (("sd", cfg.sd_budget), ("cg", cfg.cg_budget)):
            res = run(prob,
                      SolveConfig(method=label, seed=seed, allow_non_hdc=True),
                      StopRule(max_iters=budget, target_error=cfg.target),
                      oracle=oracle)
            runs.append(_method_run(label, seed, res, cfg.target))

    labels = ["gbcd", "gbcd-bs", "bcd-rr", "bcd-rand-eig", "sd", "cg"]
    summary = _iters_summary(runs, labels)
    table = _iters_table("experiment 1", labels, summary, cfg.seeds)
    return ExperimentResult("exp1", runs, summary, table)


def _method_run(label: str, seed: int, res, target: float) -> MethodRun:
    return MethodRun(
        label=label, seed=seed, trace=res.trace,
        iterations_to_target=iterations_to_target(res.trace, target),
        final_e_pnorm=float(res.trace.e_pnorm[-1]),
        final_e_2norm=float(res.trace.e_2norm[-1]))


def _iters_summary(runs, labels) -> dict:
    summary = {}
    for label in labels:
        per_seed = [r.iterations_to_target for r in runs if r.label == label]
        summary[label] = {
            "iters_per_seed": per_seed,
            "iters_median": _median(per_seed),
        }
    return summary


def _iters_table(title, labels, summary, seeds) -> str:
    width = max(len(lb) for lb in labels)
    lines = [f"{title}: iterations to target (per seed {list(seeds)})"]
    for label in labels:
        row = summary[label]
        per_seed = " ".join(f"{v:>8.0f}" for v in row["iters_per_seed"])
        lines.append(
            f"  {label:<{width}}  median {row['iters_median']:>8.0f}  | {per_seed}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Experiment 2: randomized sampling stalls under heavy rows


@dataclass
class Experiment2Config:
    n: int = 256
    heavy_count: int = 8
    factor: float = 1000.0
    budget: int = 2000
    n_runs: int = 25
    seeds: tuple = (0, 1, 2, 3, 4)


def experiment2(cfg: Experiment2Config | None = None) -> ExperimentResult:
    """Randomized Kaczmarz and randomized CD vs greedy selection, singleton
    partition, on an instance whose heavy rows soak up the sampling mass.

    Randomized methods are averaged over n_runs independent runs per
    instance seed; the aggregate trace carries the per-iteration mean
    errors. tau_mass is the fraction of all picks that landed in the heavy
    set.
    """
    cfg = cfg if cfg is not None else Experiment2Config()
    stop = StopRule(max_iters=cfg.budget)
    runs: list[MethodRun] = []
    summary: dict = {"per_seed": []}
    for seed in cfg.seeds:
        prob, tau = gen_scaled_rows(cfg.n, cfg.heavy_count, cfg.factor, seed)
        oracle = solve_direct(prob)
        part = contiguous_partition(cfg.n, 1)

        gbcd = run(prob, SolveConfig(method="gbcd", partition=part, seed=seed),
                   stop, oracle=oracle)
        runs.append(_method_run("gbcd", seed, gbcd, math.nan))

        seed_row = {"seed": seed,
                    "gbcd_final_e_2norm": float(gbcd.trace.e_2norm[-1]),
                    "gbcd_final_e_pnorm": float(gbcd.trace.e_pnorm[-1])}
        for label, method, strategy, tag in (
                ("bk-rand-rownorm", "bk", "rand-rownorm", 11),
                ("bcd-rand-diag", "bcd", "rand-diag", 12)):
            mean_trace, tau_mass, final_e2 = _averaged_runs(
                prob, part, oracle, method, strategy, seed, tag, cfg, tau)
            runs.append(MethodRun(
                label=f"{label}-mean", seed=seed, trace=mean_trace,
                iterations_to_target=math.inf,
                final_e_pnorm=float(mean_trace.e_pnorm[-1]),
                final_e_2norm=float(mean_trace.e_2norm[-1])))
            seed_row[f"{label}_mean_final_e_2norm"] = final_e2
            seed_row[f"{label}_mean_final_e_pnorm"] = float(
                mean_trace.e_pnorm[-1])
            seed_row[f"{label}_tau_mass"] = tau_mass
        summary["per_seed"].append(seed_row)

    for key in ("gbcd_final_e_2norm", "bk-rand-rownorm_mean_final_e_2norm",
                "bcd-rand-diag_mean_final_e_2norm",
                "bk-rand-rownorm_tau_mass", "bcd-rand-diag_tau_mass"):
        summary[key + "_median"] = _median(
            [row[key] for row in summary["per_seed"]])
    table = _exp2_table(summary)
    return ExperimentResult("exp2", runs, summary, table)


def _averaged_runs(prob, part, oracle, method, strategy, seed, tag, cfg, tau):
    """Mean error trajectories over n_runs seeded runs of one randomized
    method, plus the fraction of picks that landed in tau."""
    k_rows = cfg.budget + 1
    sum_ep = np.zeros(k_rows)
    sum_e2 = np.zeros(k_rows)
    tau_set = set(int(t) for t in tau)
    picks_in_tau = 0
    picks_total = 0
    final_e2 = 0.0
    for j in range(cfg.n_runs):
        res = run(prob,
                  SolveConfig(method=method, partition=part,
                              strategy=strategy, seed=(seed, tag, j)),
                  StopRule(max_iters=cfg.budget), oracle=oracle)
        ep = res.trace.column("e_pnorm")
        e2 = res.trace.column("e_2norm")
        sum_ep += ep
        sum_e2 += e2
        final_e2 += e2[-1]
        # singleton blocks: block id == coordinate index
        chosen = res.trace.block[1:]
        picks_total += len(chosen)
        picks_in_tau += sum(1 for b in chosen if b in tau_set)
    mean = Trace()
    for k in range(k_rows):
        mean.append(k, 0, sum_ep[k] / cfg.n_runs, sum_e2[k] / cfg.n_runs,
                    math.nan, -1, math.nan, 0 if k == 0 else 1,
                    0 if k == 0 else 1)
    return mean, picks_in_tau / picks_total, final_e2 / cfg.n_runs


def _exp2_table(summary) -> str:
    lines = ["experiment 2: final e_2norm after the iteration budget"]
    lines.append(f"  gbcd                 median {summary['gbcd_final_e_2norm_median']:.3e}")
    lines.append(
        "  bk-rand-rownorm mean median "
        f"{summary['bk-rand-rownorm_mean_final_e_2norm_median']:.3e}"
        f"  (tau mass {summary['bk-rand-rownorm_tau_mass_median']:.3f})")
    lines.append(
        "  bcd-rand-diag   mean median "
        f"{summary['bcd-rand-diag_mean_final_e_2norm_median']:.3e}"
        f"  (tau mass {summary['bcd-rand-diag_tau_mass_median']:.3f})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Experiment 3: random vs heavy-isolating partition


@dataclass
class Experiment3Config:
    n: int = 256
    heavy_count: int = 8
    factor: float = 1000.0
    block: int = 16
    target: float = 1e-3
    budget: int = 200000
    seeds: tuple = (0, 1, 2, 3, 4)


def experiment3(cfg: Experiment3Config | None = None) -> ExperimentResult:
    """The same greedy solver under two partitions of the same instance:
    a seeded random one and one that isolates the heavy rows in block 0.
    Reports the empirical iteration counts next to both rate bounds."""
    cfg = cfg if cfg is not None else Experiment3Config()
    stop = StopRule(max_iters=cfg.budget, target_error=cfg.target)
    runs: list[MethodRun] = []
    for seed in cfg.seeds:
        prob, tau = gen_scaled_rows(cfg.n, cfg.heavy_count, cfg.factor, seed)
        oracle = solve_direct(prob)
        parts = {
            "gbcd-random": random_partition(cfg.n, cfg.block, seed),
            "gbcd-dominant": dominant_partition(prob, cfg.block, tau, seed),
        }
        for label, part in parts.items():
            res = run(prob, SolveConfig(method="gbcd", partition=part,
                                        seed=seed, allow_non_hdc=True),
                      stop, oracle=oracle)
            mr = _method_run(label, seed, res, cfg.target)
            mr.rate = rate_bound(prob, part)
            runs.append(mr)

    labels = ["gbcd-random", "gbcd-dominant"]
    summary = _iters_summary(runs, labels)
    for label in labels:
        rates = [r.rate for r in runs if r.label == label]
        bounds = [rr.bound_exact for rr in rates]
        gaps = [rr.dominance_gap for rr in rates]
        summary[label]["bound_exact_per_seed"] = bounds
        summary[label]["bound_exact_median"] = _median(bounds)
        summary[label]["dominance_gap_per_seed"] = gaps
        summary[label]["dominance_gap_median"] = _median(gaps)
    lines = [_iters_table("experiment 3", labels, summary, cfg.seeds)]
    for label in labels:
        lines.append(
            f"  {label:<13} bound_exact median "
            f"{summary[label]['bound_exact_median']:.8f}  "
            f"dominance_gap median "
            f"{summary[label]['dominance_gap_median']:.4g}")
    return ExperimentResult("exp3", runs, summary, "\n".join(lines))


# ---------------------------------------------------------------------------
# Distributed handoff cost model


@dataclass
class DistCostReport:
    """Replay of a block trace against a block-to-node placement.

    One node is active per iteration (the one holding the chosen block).
    Whenever the active node changes, the iterate and gradient cross the
    wire: 2n transfer units. The initial state lives on node 0, so a first
    step served by any other node pays the same handoff. Compute cost is
    n * rows_touched per step.
    """

    n_nodes: int
    transfer_units: int
    compute_units: int
    timeline: np.ndarray
    utilization: np.ndarray


def simulate_distributed(trace: Trace, assignment, n_nodes: int,
                         n: int | None = None) -> DistCostReport:
    """Charge transfer and compute costs for a finished block-method trace.

    assignment maps block id -> node id, as a dict or an indexable array
    covering every block the trace chose. n defaults to the largest
    rows_touched seen (correct for runs whose partition covers [n)).
    """
    blocks = [int(b) for b in trace.block[1:]]
    rows = [int(rt) for rt in trace.rows_touched[1:]]
    if any(b < 0 for b in blocks):
        raise InvalidAssignment(
            "trace contains direction-method steps; only block-method "
            "traces can be replayed")
    if n_nodes < 1:
        raise InvalidAssignment(f"n_nodes must be >= 1, got {n_nodes}")

    def node_of(block: int) -> int:
        try:
            node = assignment[block]
        except (KeyError, IndexError):
            raise InvalidAssignment(f"block {block} has no node assigned")
        node = int(node)
        if not 0 <= node < n_nodes:
            raise InvalidAssignment(
                f"block {block} assigned to node {node}, outside [0, {n_nodes})")
        return node

    if n is None:
        n = max(rows, default=0)
    timeline = np.array([node_of(b) for b in blocks], dtype=np.int64)
    transfer = 0
    where = 0  # initial x and gradient live on node 0
    for node in timeline:
        if node != where:
            transfer += 2 * n
            where = int(node)
    compute = sum(n * rt for rt in rows)
    util = np.bincount(timeline, minlength=n_nodes).astype(np.float64)
    util /= max(1, timeline.size)
    return DistCostReport(n_nodes=n_nodes, transfer_units=transfer,
                          compute_units=compute, timeline=timeline,
                          utilization=util)


# ---------------------------------------------------------------------------
# Output


def save_result(result: ExperimentResult, out_dir) -> list[Path]:
    """Write one CSV per run plus a summary.txt; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for mr in result.runs:
        path = out / f"{result.name}_seed{mr.seed}_{mr.label}.csv"
        write_csv(mr.trace, path)
        paths.append(path)
    summary_path = out / f"{result.name}_summary.txt"
    summary_path.write_text(result.table + "\n", encoding="ascii")
    paths.append(summary_path)
    return paths
