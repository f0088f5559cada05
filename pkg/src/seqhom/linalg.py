"""Direct factorization and solves for two-block KKT systems.

Small systems go through a dense LU with partial pivoting, larger ones
through SuperLU.  Every solve checks its true residual and applies up to
two sweeps of iterative refinement when it is too large.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

DENSE_LIMIT = 200

# raw LAPACK routines; the scipy wrappers cost more than the solve at KKT sizes of a few rows
_getrf, _getrs = sla.lapack.get_lapack_funcs(("getrf", "getrs"), (np.zeros(1),))
REFINE_TOL = 1e-10
MAX_REFINE = 2
_EPS = float(np.finfo(float).eps)


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization hits a (numerically) zero pivot."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass
class SolveStats:
    n_solves: int = 0
    n_refinements: int = 0
    last_residual: float = 0.0
    max_residual: float = 0.0


@dataclass
class Factorization:
    """LU factors of a square matrix plus the matrix itself for refinement."""

    matrix: object
    kind: str
    factors: object
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def shape(self):
        return self.matrix.shape

    def _raw_solve(self, rhs):
        if self.kind == "dense":
            lu, piv = self.factors
            return _getrs(lu, piv, rhs)[0]
        return self.factors.solve(rhs)

    def solve(self, rhs):
        return solve(self, rhs)


def factorize(m) -> Factorization:
    """LU-factorize a square dense or sparse matrix.

    Raises
    ------
    SingularMatrixError
        If a zero pivot is met.  ``index`` holds the offending pivot
        position when it is known.
    """
    n_rows, n_cols = m.shape
    if n_rows != n_cols:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if n_rows <= DENSE_LIMIT:
        dense = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)
        if not n_rows:
            return Factorization(dense, "dense", _getrf(dense)[:2])
        # NaN and inf both survive the max
        amax = float(np.abs(dense).max())
        if not math.isfinite(amax):
            raise SingularMatrixError("matrix has non-finite entries")
        lu, piv, _ = _getrf(dense)
        diag = np.abs(lu.diagonal())
        k = int(diag.argmin())
        if diag[k] <= _EPS * max(amax, 1.0) * n_rows:
            raise SingularMatrixError(f"zero pivot at position {k}", index=k)
        return Factorization(dense, "dense", (lu, piv))
    csc = sp.csc_matrix(m, dtype=float)
    if not np.all(np.isfinite(csc.data)):
        raise SingularMatrixError("matrix has non-finite entries")
    try:
        lu = spla.splu(csc)
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.size and np.min(diag) == 0.0:
        idx = int(np.argmin(diag))
        raise SingularMatrixError(f"zero pivot at position {idx}", index=idx)
    return Factorization(csc.tocsr(), "sparse", lu)


def solve(f: Factorization, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` with the stored factors, refining if needed."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != f.shape[0]:
        raise ValueError(f"rhs has length {rhs.shape[0]}, expected {f.shape[0]}")
    rhs_norm = math.sqrt(float(np.vdot(rhs, rhs)))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    x = f._raw_solve(rhs)
    res = rhs - f.matrix @ x
    res_norm = math.sqrt(float(np.vdot(res, res)))
    sweeps = 0
    while res_norm > REFINE_TOL * rhs_norm and sweeps < MAX_REFINE:
        x = x + f._raw_solve(res)
        res = rhs - f.matrix @ x
        res_norm = math.sqrt(float(np.vdot(res, res)))
        sweeps += 1
    if not np.isfinite(x).all():
        raise SingularMatrixError("solve produced non-finite values")
    rel = res_norm / rhs_norm
    f.stats.n_solves += 1
    f.stats.n_refinements += sweeps
    f.stats.last_residual = rel
    f.stats.max_residual = max(f.stats.max_residual, rel)
    if sweeps:
        logger.debug("KKT solve refined %d times, relative residual %.3e", sweeps, rel)
    return x
