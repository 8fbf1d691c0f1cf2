"""Dense real linear algebra used by the oracles and the data pipeline."""

import numpy as np

from . import kernels
from .errors import DimensionError, SingularMatrixError

PIVOT_TOL = 1e-12


def as_matrix(a) -> np.ndarray:
    """Validate and return a square float64 matrix with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise DimensionError("matrix has non-finite entries")
    return m


def frob(a) -> float:
    return float(np.sqrt(np.sum(np.asarray(a) ** 2)))


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def mat_mul(a, b) -> np.ndarray:
    """Dense product in 64-bit arithmetic."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    return a @ b


def mat_inverse(a, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting.

    Raises SingularMatrixError when any pivot magnitude falls at or below
    `pivot_tol`.
    """
    a = as_matrix(a)
    inv, min_piv = kernels.gauss_jordan(a)
    if min_piv <= pivot_tol:
        raise SingularMatrixError(
            f"pivot {min_piv:.3e} at or below threshold {pivot_tol:.1e}"
        )
    return inv


def det(a, pivot_tol: float = PIVOT_TOL) -> float:
    """Determinant via partial-pivot LU; 0.0 when a pivot underflows."""
    a = as_matrix(a)
    d, min_piv = kernels.lu_det(a)
    if min_piv <= pivot_tol:
        return 0.0
    return float(d)
