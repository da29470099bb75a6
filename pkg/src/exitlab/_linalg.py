"""Dense solve helper shared by the solver modules."""
from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve

from .defaults import REFINE_MAX_SWEEPS, REFINE_TARGET, SINGULAR_RCOND

log = logging.getLogger(__name__)


class SingularSystemError(ValueError):
    """Linear system is numerically singular.

    Carries ``cond_estimate``, the 1-norm condition estimate of the matrix
    at the point of failure.
    """

    def __init__(self, message: str, cond_estimate: float = float("inf")):
        super().__init__(message)
        self.cond_estimate = cond_estimate


def solve_refined(a: np.ndarray, b: np.ndarray, context: str = "solve"):
    """Solve a x = b by LU with iterative refinement.

    Returns (x, cond_estimate) where cond_estimate is the 1-norm condition
    estimate from the LU factors. Supports a vector or matrix right-hand
    side. Raises SingularSystemError when the factorization is numerically
    rank deficient (reciprocal condition below SINGULAR_RCOND).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    anorm = np.linalg.norm(a, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a)
    (gecon,) = get_lapack_funcs(("gecon",), (a,))
    rcond, _ = gecon(lu, anorm, norm="1")
    cond = float("inf") if rcond == 0 else 1.0 / float(rcond)
    if not np.isfinite(lu).all() or rcond < SINGULAR_RCOND:
        raise SingularSystemError(
            f"{context}: matrix of size {a.shape[0]} is numerically singular "
            f"(condition estimate ~ {cond:.3e})",
            cond_estimate=cond,
        )
    x = lu_solve((lu, piv), b)
    for _ in range(REFINE_MAX_SWEEPS):
        r = b - a @ x
        if np.max(np.abs(r)) <= REFINE_TARGET * max(1.0, anorm * np.max(np.abs(x))):
            break
        x = x + lu_solve((lu, piv), r)
    log.debug("%s: n=%d cond~%.3e", context, a.shape[0], cond)
    return x, cond
