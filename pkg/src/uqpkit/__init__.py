"""Out-of-core solvers for unconstrained quadratic programs.

Block methods that keep at most one block of the matrix in memory per
iteration, the rate bounds that govern them, an on-disk block store, and a
benchmark harness. See the README for the CLI surface.
"""

from uqpkit import kernels
from uqpkit.blockstore import BlockStore, write_store
from uqpkit.partition import (
    HdcLimits,
    Partition,
    RateReport,
    contiguous_partition,
    detect_heavy_rows,
    dominant_partition,
    hdc_admissible,
    random_partition,
    rate_bound,
    read_partition,
    write_partition,
)
from uqpkit.problem import (
    Oracle,
    UqpProblem,
    gen_block_dominant,
    gen_random_spd,
    gen_scaled_rows,
    solve_direct,
)
from uqpkit.solvers import SolveConfig, SolveResult, StopRule, run
from uqpkit.trace import Trace, read_csv, write_csv

__version__ = "0.1.0"

__all__ = [
    "BlockStore", "HdcLimits", "Oracle", "Partition", "RateReport",
    "SolveConfig", "SolveResult", "StopRule", "Trace", "UqpProblem",
    "contiguous_partition", "detect_heavy_rows", "dominant_partition",
    "gen_block_dominant", "gen_random_spd", "gen_scaled_rows",
    "hdc_admissible", "kernels", "random_partition", "rate_bound",
    "read_csv", "read_partition", "run", "solve_direct", "write_csv",
    "write_partition", "write_store",
]
