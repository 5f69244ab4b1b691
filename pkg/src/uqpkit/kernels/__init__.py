"""Kernel lane selection.

The compiled extension is preferred; the NumPy fallback is used when the
extension is missing or when UQPKIT_PURE_PYTHON=1 is set. Both lanes expose
the same five functions with identical semantics.
"""

import os

from uqpkit.kernels import pyfallback as _py

if os.environ.get("UQPKIT_PURE_PYTHON", "") == "1":
    _impl = _py
    BACKEND = "python"
else:
    try:
        from uqpkit.kernels import _ckern as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _py
        BACKEND = "python"

cholesky_factor = _impl.cholesky_factor
solve_lower = _impl.solve_lower
solve_lower_t = _impl.solve_lower_t
jacobi_eigvals = _impl.jacobi_eigvals
block_scores = _impl.block_scores


def backend() -> str:
    """Name of the active kernel lane: 'cython' or 'python'."""
    return BACKEND
