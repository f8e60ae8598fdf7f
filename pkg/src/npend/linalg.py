"""Dense real linear algebra used throughout the toolkit.

Thin, contract-checked wrappers around LAPACK (via numpy/scipy) for the
three operations everything else needs: factor-and-solve with partial
pivoting, eigenvalues of general real matrices, and the controllability
matrix of a single-input pair.  The wrappers add the validation and the
failure modes the rest of the code relies on (explicit singularity and
convergence errors instead of silent NaNs).

Matrices serialize to a plain-text CSV form (one row per line, full
double precision) for fixtures and debugging; see `save_matrix` /
`load_matrix`.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as _sla

__all__ = [
    "SingularMatrixError",
    "NoConvergenceError",
    "lu_solve",
    "eigenvalues",
    "controllability_matrix",
    "save_matrix",
    "load_matrix",
]

# Relative pivot threshold: a pivot below this fraction of ||A||_inf is
# treated as an exact zero.  Relative (not absolute) so that plant
# matrices with entries spanning 1e-1..3e3 are not misclassified.
PIVOT_RTOL = 1e-13


class SingularMatrixError(ValueError):
    """A linear solve met a pivot too small relative to the matrix norm."""


class NoConvergenceError(RuntimeError):
    """The eigenvalue iteration failed to converge."""


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _pivoted_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Factor-and-solve core without input validation (hot path)."""
    lu, piv = _sla.lu_factor(a, check_finite=False)
    norm_a = np.abs(a).sum(axis=1).max()
    pivots = np.abs(lu.diagonal())
    if not pivots.min() >= PIVOT_RTOL * norm_a:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {PIVOT_RTOL:g} * ||A||_inf = "
            f"{PIVOT_RTOL * norm_a:.3e}"
        )
    return _sla.lu_solve((lu, piv), b, check_finite=False)


def lu_solve(a, b) -> np.ndarray:
    """Solve A X = B by LU factorization with partial pivoting.

    Raises SingularMatrixError when a pivot magnitude falls below
    PIVOT_RTOL * ||A||_inf.
    """
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"A must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"B has {b.shape[0]} rows, expected {n}")
    return _pivoted_solve(a, b)


def eigenvalues(a) -> np.ndarray:
    """All eigenvalues of a square real matrix, as a complex array.

    Complex eigenvalues of a real matrix come in conjugate pairs; the sum
    equals the trace to rounding.  Raises NoConvergenceError if the QR
    iteration inside LAPACK gives up.
    """
    a = _as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"A must be square, got {a.shape}")
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from exc


def controllability_matrix(a, b) -> np.ndarray:
    """[b, Ab, A^2 b, ..., A^(n-1) b] for a single-input pair (A, b)."""
    a = _as_matrix(a, "A")
    b = np.asarray(b, dtype=float).reshape(-1)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"A must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"b has length {b.shape[0]}, expected {n}")
    cols = np.empty((n, n))
    v = b
    for k in range(n):
        cols[:, k] = v
        v = a @ v
    return cols


def controllability_rank(a, b, rtol: float = 1e-9) -> tuple[int, float]:
    """Numerical rank of the controllability matrix, judged scale-free.

    The raw columns of [b, Ab, ...] grow like ||A||^k, so a plain SVD rank
    test on them only measures column scaling.  Each column is therefore
    normalized to unit length first; the returned ratio is
    sigma_min/sigma_max of the normalized matrix.
    """
    cm = controllability_matrix(a, b)
    norms = np.linalg.norm(cm, axis=0)
    norms[norms == 0.0] = 1.0
    sv = np.linalg.svd(cm / norms, compute_uv=False)
    ratio = sv[-1] / sv[0]
    rank = int(np.sum(sv > rtol * sv[0]))
    return rank, float(ratio)


def save_matrix(path, a) -> None:
    """Write a matrix as CSV, one row per line, %.17g precision."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w") as fh:
        for row in a:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by `save_matrix`."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return np.asarray(rows, dtype=float)
