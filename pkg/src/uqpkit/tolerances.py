"""Central numerical constants.

Every tolerance used by an operation lives here so that the operation and
the test asserting on it can never drift apart. Values are plain floats and
ints; nothing in this module imports anything.
"""

# Symmetry check: |a_ij - a_ji| <= SYM_RTOL * max(1, |a_ij|).
SYM_RTOL = 1e-12

# Cholesky: a pivot <= CHOL_PIVOT_RTOL * max diagonal of the input fails.
CHOL_PIVOT_RTOL = 1e-13
# Reconstruction quality L L^T = a, relative Frobenius.
CHOL_RECON_RTOL = 1e-12

# spd_invert: entrywise |a a^-1 - I| tolerance.
INV_IDENTITY_ATOL = 1e-10

# Cyclic Jacobi eigensolver: sweep until off-diagonal Frobenius norm is
# below JACOBI_TARGET_RTOL * ||a||_F (or progress stalls), hard sweep cap.
# The contract only promises JACOBI_RESIDUAL_RTOL; the target is tighter.
JACOBI_TARGET_RTOL = 1e-12
JACOBI_RESIDUAL_RTOL = 1e-9
JACOBI_MAX_SWEEPS = 40

# Power iteration for the spectral norm.
SPECTRAL_RTOL = 1e-9
SPECTRAL_RESTARTS = 5
SPECTRAL_ITER_FACTOR = 10  # cap = factor * dim per restart

# Direct solve / dense eigensolve size cap (desk scale).
DIRECT_SOLVE_CAP = 4096

# Oracle quality: ||P x_opt - q||_2 <= ORACLE_RESIDUAL_RTOL * ||q||_2.
ORACLE_RESIDUAL_RTOL = 1e-9

# Ridge added by the random SPD generator: n * RIDGE_SCALE * I.
RIDGE_SCALE = 1e-9

# Maintained-gradient drift allowance: |g - (Px - q)|_inf per component,
# relative to (1 + ||q||_inf).
GRAD_DRIFT_RTOL = 1e-8

# Agreement of the two DLDR P-norm evaluation routes.
DLDR_EQ_ATOL = 1e-10

# Block size threshold below which the lane kernel factors directly;
# larger matrices go through the blocked driver (BLAS-bound either way).
CHOL_PANEL = 128

# CSV reals are written with this many significant digits (round-trip safe).
CSV_SIG_DIGITS = 17
