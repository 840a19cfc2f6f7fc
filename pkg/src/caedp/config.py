"""Repository-wide numerical constants.

Every tolerance used by more than one module lives here so that tests and
library code agree on a single value.
"""

import os

# Stick-breaking weight vectors must sum to 1 within this tolerance after
# truncation closure (last stick fraction forced to 1).
SIMPLEX_TOL = 1e-12

# Agreement required between conjugate/closed-form linear algebra and a
# dense reference computation.
DENSE_LINALG_TOL = 1e-10

# Least-squares fits must match the normal-equations oracle this closely.
REGRESSION_ORACLE_TOL = 1e-8

# Default absolute tolerance for mixture-CDF inversion.
CDF_INVERSION_TOL = 1e-8

# Per-draw estimand decomposition identities (TE = NDE + NIE, NIE = SME + IME).
DECOMPOSITION_TOL = 1e-10

# Stick fractions are clamped below this value before taking log(1 - s) in
# the concentration-parameter updates.
STICK_FRACTION_CLAMP = 1.0 - 1e-12

# Default truncation levels (K, L, M): Theorem-2 bound < 1e-4 per level at
# concentration 1.
DEFAULT_TRUNCATION = (15, 15, 15)

# Environment switch for the numba kernels ("0" forces the numpy fallback).
NUMBA_ENV_VAR = "CAEDP_NUMBA"

# Environment variable holding the default worker count for the CLI.
THREADS_ENV_VAR = "CAEDP_THREADS"


def numba_enabled() -> bool:
    return os.environ.get(NUMBA_ENV_VAR, "1") != "0"
