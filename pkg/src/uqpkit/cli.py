"""Command-line front end.

Subcommands:
    gen    generate an instance and write it as an on-disk block store
    solve  run a solver against a store, optionally writing a trace CSV
    bound  print the contraction-rate bounds for a store and partition
    bench  reproduce one of the three canned experiments

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 solver finished
without reaching the requested error target, 5 capability refusal (non-HDC
configuration without --allow-quadratic, or a problem too large for the
dense oracle). The environment variable UQP_CACHE_DIR overrides where
block-inverse files are cached.

Every subcommand prints its resolved configuration before doing work, so a
logged invocation can be replayed exactly.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from uqpkit import bench, tolerances as tol
from uqpkit.blockstore import BlockStore, write_store
from uqpkit.errors import (
    HdcViolation,
    IoError,
    TooLargeForDirect,
    UqpError,
)
from uqpkit.partition import contiguous_partition, rate_bound, read_partition
from uqpkit.problem import (
    Oracle,
    UqpProblem,
    gen_block_dominant,
    gen_random_spd,
    gen_scaled_rows,
    solve_direct,
)
from uqpkit.solvers import ALL_METHODS, SolveConfig, StopRule, run
from uqpkit.trace import write_csv

ORACLE_FILE = "oracle.bin"
HEAVY_FILE = "heavy_set.txt"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except (HdcViolation, TooLargeForDirect) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except UqpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _print_config(args) -> None:
    shown = {k: v for k, v in sorted(vars(args).items())
             if k != "func" and v is not None}
    print("config: " + " ".join(f"{k}={v}" for k, v in shown.items()))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqpkit",
        description="out-of-core solvers for unconstrained quadratic programs")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance into a block store")
    gen.add_argument("--kind", required=True,
                     choices=["block-dominant", "scaled-rows", "random-spd"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--block", type=int, default=None,
                     help="tile size for block-dominant; also the store's "
                          "partition block size (default 1 for other kinds)")
    gen.add_argument("--diag-scale", type=float, default=10.0)
    gen.add_argument("--off-scale", type=float, default=0.1)
    gen.add_argument("--heavy", type=int, default=None,
                     help="heavy row count (scaled-rows)")
    gen.add_argument("--factor", type=float, default=1000.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="run a solver against a store")
    solve.add_argument("--store", required=True)
    solve.add_argument("--method", required=True, choices=list(ALL_METHODS))
    solve.add_argument("--strategy", default=None)
    solve.add_argument("--top-rows", type=int, default=None)
    solve.add_argument("--eps", type=float, default=None,
                       help="stop when the relative error drops below this")
    solve.add_argument("--max-iters", type=int, default=10000)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--rho", type=int, default=None,
                       help="resident-row budget for the HDC check")
    solve.add_argument("--trace", default=None, help="write the trace CSV here")
    solve.add_argument("--allow-quadratic", action="store_true",
                       help="permit O(n^2)-per-iteration configurations")
    solve.set_defaults(func=cmd_solve)

    bound = sub.add_parser("bound", help="contraction-rate bounds")
    bound.add_argument("--store", required=True)
    bound.add_argument("--partition", default=None,
                       help="partition file (default: the store's own)")
    bound.set_defaults(func=cmd_bound)

    bn = sub.add_parser("bench", help="run a canned experiment")
    bn.add_argument("--experiment", type=int, required=True, choices=[1, 2, 3])
    bn.add_argument("--out", required=True)
    bn.add_argument("--seeds", type=int, default=5,
                    help="number of instance seeds (0..k-1)")
    bn.add_argument("--n", type=int, default=None)
    bn.add_argument("--block", type=int, default=None)
    bn.add_argument("--heavy", type=int, default=None)
    bn.add_argument("--factor", type=float, default=None)
    bn.add_argument("--budget", type=int, default=None)
    bn.add_argument("--runs", type=int, default=None,
                    help="runs per randomized method (experiment 2)")
    bn.add_argument("--full-scale", action="store_true",
                    help="lift the desk-scale dimension cap")
    bn.set_defaults(func=cmd_bench)
    return parser


def _usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _cache_dir():
    return os.environ.get("UQP_CACHE_DIR") or None


# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.kind == "block-dominant":
        if args.block is None:
            return _usage("--kind block-dominant requires --block")
        prob = gen_block_dominant(args.n, args.block, args.diag_scale,
                                  args.off_scale, args.seed)
        part_block = args.block
        heavy = None
    elif args.kind == "scaled-rows":
        if args.heavy is None:
            return _usage("--kind scaled-rows requires --heavy")
        prob, heavy = gen_scaled_rows(args.n, args.heavy, args.factor,
                                      args.seed)
        part_block = args.block if args.block is not None else 1
    else:
        prob = gen_random_spd(args.n, args.seed)
        part_block = args.block if args.block is not None else 1
        heavy = None

    part = contiguous_partition(args.n, part_block)
    store = write_store(prob, part, args.out, cache_dir=_cache_dir())
    root = Path(args.out)
    if heavy is not None:
        (root / HEAVY_FILE).write_text(
            ",".join(str(int(i)) for i in heavy) + "\n", encoding="ascii")
    if args.n <= tol.DIRECT_SOLVE_CAP:
        oracle = solve_direct(prob)
        _write_oracle(root / ORACLE_FILE, oracle)
        oracle_note = ORACLE_FILE
    else:
        oracle_note = "skipped (n above direct-solve cap)"
    print(f"store: {root}  n={args.n}  blocks={store.m}  d={part.d}  "
          f"oracle={oracle_note}")
    return 0


def _write_oracle(path: Path, oracle: Oracle) -> None:
    payload = (np.ascontiguousarray(oracle.x_opt, dtype="<f8").tobytes()
               + np.float64(oracle.f_opt).tobytes())
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise IoError(f"cannot write oracle sidecar: {exc}") from exc


def _read_oracle(path: Path, n: int) -> Oracle | None:
    if not path.is_file():
        return None
    data = path.read_bytes()
    if len(data) != (n + 1) * 8:
        raise IoError(f"oracle sidecar {path} has {len(data)} bytes, "
                      f"expected {(n + 1) * 8}")
    flat = np.frombuffer(data, dtype="<f8")
    return Oracle(x_opt=flat[:n].copy(), f_opt=float(flat[n]))


# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    store = BlockStore.open(args.store, cache_dir=_cache_dir())
    prob = UqpProblem(store, store.assemble_q())
    oracle = _read_oracle(Path(args.store) / ORACLE_FILE, store.n)

    stop = StopRule(max_iters=args.max_iters)
    rule = "max_iters"
    if args.eps is not None:
        if oracle is not None:
            stop = StopRule(max_iters=args.max_iters, target_error=args.eps)
            rule = "relative P-norm error (oracle sidecar)"
        else:
            stop = StopRule(max_iters=args.max_iters, grad_rtol=args.eps)
            rule = "relative gradient norm (no oracle sidecar)"
    config = SolveConfig(method=args.method, strategy=args.strategy,
                         seed=args.seed, top_rows=args.top_rows,
                         allow_non_hdc=args.allow_quadratic, rho=args.rho)
    result = run(prob, config, stop, oracle=oracle)

    if args.trace is not None:
        write_csv(result.trace, args.trace)
    last = result.trace[len(result.trace) - 1]
    print(f"stop rule: {rule}")
    print(f"iterations: {result.iterations}  reason: {result.reason}")
    print(f"final e_pnorm: {last.e_pnorm:.6e}  final e_2norm: "
          f"{last.e_2norm:.6e}")
    print(f"blocks fetched: {store.access_counter}  bytes read: "
          f"{store.bytes_read}  peak resident rows: "
          f"{store.peak_resident_rows}")
    if args.eps is not None and not result.converged:
        print(f"target {args.eps:g} not reached within {args.max_iters} "
              "iterations", file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------


def cmd_bound(args) -> int:
    store = BlockStore.open(args.store, cache_dir=_cache_dir())
    prob = UqpProblem(store, store.assemble_q())
    part = store.partition
    if args.partition is not None:
        try:
            part = read_partition(args.partition)
        except OSError as exc:
            raise IoError(f"cannot read partition file: {exc}") from exc
    report = rate_bound(prob, part)
    print(f"m: {report.m}")
    print(f"lambda_min(P B^-1): {report.lambda_min_pb:.12g}")
    print(f"bound_exact: {report.bound_exact:.12g}")
    print(f"bound_simple: {report.bound_simple:.12g}")
    print(f"dominance_gap: {report.dominance_gap:.12g}")
    return 0


# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    seeds = tuple(range(args.seeds))
    overrides = {"seeds": seeds}
    for field_name, value in (("n", args.n), ("block", args.block),
                              ("heavy_count", args.heavy),
                              ("factor", args.factor),
                              ("n_runs", args.runs)):
        if value is not None:
            overrides[field_name] = value
    if args.experiment == 1:
        cfg = bench.Experiment1Config(
            **{k: v for k, v in overrides.items()
               if k in bench.Experiment1Config.__dataclass_fields__})
        if args.budget is not None:
            cfg.block_budget = args.budget
        _check_scale(cfg.n, args.full_scale)
        result = bench.experiment1(cfg, workdir=Path(args.out) / "stores")
    elif args.experiment == 2:
        cfg = bench.Experiment2Config(
            **{k: v for k, v in overrides.items()
               if k in bench.Experiment2Config.__dataclass_fields__})
        if args.budget is not None:
            cfg.budget = args.budget
        _check_scale(cfg.n, args.full_scale)
        result = bench.experiment2(cfg)
    else:
        cfg = bench.Experiment3Config(
            **{k: v for k, v in overrides.items()
               if k in bench.Experiment3Config.__dataclass_fields__})
        if args.budget is not None:
            cfg.budget = args.budget
        _check_scale(cfg.n, args.full_scale)
        result = bench.experiment3(cfg)
    paths = bench.save_result(result, args.out)
    print(result.table)
    print(f"wrote {len(paths)} files under {args.out}")
    return 0


def _check_scale(n: int, full_scale: bool) -> None:
    if n > tol.DIRECT_SOLVE_CAP and not full_scale:
        raise TooLargeForDirect(
            f"n={n} is above the desk-scale cap {tol.DIRECT_SOLVE_CAP}; "
            "pass --full-scale to run anyway")


if __name__ == "__main__":
    sys.exit(main())
