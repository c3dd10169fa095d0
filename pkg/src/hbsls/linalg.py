"""Dense building blocks: column-pivoted QR and interpolative decompositions."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


def as_dense(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def pivoted_qr(a):
    """Householder QR with column pivoting via LAPACK geqp3.

    Returns ``(qr, tau, R, piv)``: the compact reflector storage, the
    reflector coefficients, the upper-trapezoidal factor and the pivot order,
    so that ``a[:, piv] = Q R``.
    """
    a = as_dense(a)
    m, n = a.shape
    if m == 0 or n == 0:
        return (np.zeros((m, n)), np.zeros(0), np.zeros((min(m, n), n)),
                np.arange(n))
    (qr, tau), R, piv = sla.qr(a, mode="raw", pivoting=True)
    return qr, tau, R, piv


def numerical_rank(R, tol):
    """Smallest k with |R[k,k]| <= tol |R[0,0]|, or min(R.shape)."""
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return 0
    small = np.nonzero(d <= tol * d[0])[0]
    return int(small[0]) if small.size else d.size


@dataclass
class IdResult:
    """Interpolative decomposition of an m x n matrix.

    side == "column": a ~= a[:, skel] @ interp, interp is k x n.
    side == "row":    a ~= interp @ a[skel, :], interp is m x k.
    """

    skel: np.ndarray
    interp: np.ndarray
    rank: int
    side: str


def column_id(a, tol):
    """Column ID: a ~= a[:, skel] @ P with an exact identity on skel."""
    a = as_dense(a)
    if not 0.0 < tol < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    m, n = a.shape
    if m == 0 or n == 0:
        return IdResult(np.zeros(0, dtype=int), np.zeros((0, n)), 0, "column")
    _, _, R, piv = pivoted_qr(a)
    k = numerical_rank(R, tol)
    P = np.zeros((k, n))
    if k > 0:
        T = sla.solve_triangular(R[:k, :k], R[:k, k:], lower=False)
        P[:, piv[:k]] = np.eye(k)
        P[:, piv[k:]] = T
    return IdResult(np.asarray(piv[:k], dtype=int), P, k, "column")


def row_id(a, tol):
    """Row ID: a ~= L @ a[skel, :], computed as the column ID of a^T."""
    a = as_dense(a)
    res = column_id(a.T, tol)
    return IdResult(res.skel, res.interp.T.copy(), res.rank, "row")
