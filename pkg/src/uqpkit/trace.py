"""Per-iteration run traces and their CSV serialization.

One trace row per iteration plus a k=0 baseline row. Reals are written with
17 significant digits so parsing the file back recovers the exact float64;
line endings are always LF. wall_nanos is cumulative elapsed time and is the
one column exempt from byte-for-byte determinism checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from uqpkit.errors import IoError
from uqpkit.tolerances import CSV_SIG_DIGITS

CSV_HEADER = ("k,wall_nanos,e_pnorm,e_2norm,f_gap,block,beta,"
              "blocks_fetched,rows_touched")

_COLUMNS = ("k", "wall_nanos", "e_pnorm", "e_2norm", "f_gap", "block",
            "beta", "blocks_fetched", "rows_touched")

_INT_COLUMNS = {"k", "wall_nanos", "block"}


@dataclass(frozen=True)
class TraceRecord:
    """One row of a trace. block is -1 for direction-based steps and for
    the k=0 baseline; error columns are NaN when no oracle was available."""

    k: int
    wall_nanos: int
    e_pnorm: float
    e_2norm: float
    f_gap: float
    block: int
    beta: float
    blocks_fetched: float
    rows_touched: float


class Trace:
    """Columnar trace storage; cheap to append half a million times."""

    def __init__(self):
        self.k = []
        self.wall_nanos = []
        self.e_pnorm = []
        self.e_2norm = []
        self.f_gap = []
        self.block = []
        self.beta = []
        self.blocks_fetched = []
        self.rows_touched = []

    def append(self, k, wall_nanos, e_pnorm, e_2norm, f_gap, block, beta,
               blocks_fetched, rows_touched) -> None:
        self.k.append(k)
        self.wall_nanos.append(wall_nanos)
        self.e_pnorm.append(e_pnorm)
        self.e_2norm.append(e_2norm)
        self.f_gap.append(f_gap)
        self.block.append(block)
        self.beta.append(beta)
        self.blocks_fetched.append(blocks_fetched)
        self.rows_touched.append(rows_touched)

    def __len__(self) -> int:
        return len(self.k)

    def __getitem__(self, i: int) -> TraceRecord:
        return TraceRecord(
            k=self.k[i], wall_nanos=self.wall_nanos[i],
            e_pnorm=self.e_pnorm[i], e_2norm=self.e_2norm[i],
            f_gap=self.f_gap[i], block=self.block[i], beta=self.beta[i],
            blocks_fetched=self.blocks_fetched[i],
            rows_touched=self.rows_touched[i])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=np.float64)


def _format(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{CSV_SIG_DIGITS}g}"


def write_csv(trace: Trace, path) -> None:
    """Write one trace; header is fixed, one row per record, LF endings."""
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(len(trace)):
                row = [_format(name, getattr(trace, name)[i]) for name in _COLUMNS]
                fh.write(",".join(row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write trace to {path}: {exc}") from exc


def read_csv(path) -> dict[str, np.ndarray]:
    """Parse a trace CSV back into float64 column arrays."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise IoError(f"unexpected trace header in {path}: {header!r}")
            cols = {name: [] for name in _COLUMNS}
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != len(_COLUMNS):
                    raise IoError(f"malformed trace row in {path}: {line!r}")
                for name, tok in zip(_COLUMNS, parts):
                    cols[name].append(float(tok))
    except OSError as exc:
        raise IoError(f"cannot read trace from {path}: {exc}") from exc
    return {name: np.asarray(vals, dtype=np.float64)
            for name, vals in cols.items()}
