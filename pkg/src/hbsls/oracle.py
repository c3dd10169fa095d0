"""Dense reference solvers, independent of the fast path."""

import numpy as np
import scipy.linalg as sla

RANK_TOL = 1e-12
SIZE_CAP = 10**7


def _check_rank(R, what):
    d = np.abs(np.diag(R))
    if d.size and (d.max() == 0 or d.min() <= RANK_TOL * d.max()):
        raise np.linalg.LinAlgError(f"{what} is numerically rank deficient")


def dense_lstsq(A, b):
    """argmin ||A x - b|| by Householder QR (A full column rank, M >= N),
    or the minimum-norm solution via QR of A^T when M < N."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    M, N = A.shape
    if M >= N:
        Q, R = np.linalg.qr(A)
        _check_rank(R, "A")
        return sla.solve_triangular(R, Q.T @ b)
    Q, R = np.linalg.qr(A.T)
    _check_rank(R, "A")
    return Q @ sla.solve_triangular(R, b, trans="T")


def dense_equality_lstsq(E, C, f, g):
    """min ||E x - f|| subject to C x = g by the nullspace method.

    C (p x n, full row rank) = [R^T 0] Q^T splits x = Q1 y1 + Q2 y2 with
    y1 fixed by the constraints and y2 a free least-squares problem.
    """
    E = np.asarray(E, dtype=float)
    C = np.asarray(C, dtype=float)
    p, n = C.shape
    if p == 0:
        return dense_lstsq(E, f)
    if p > n:
        raise np.linalg.LinAlgError("more constraints than unknowns")
    Q, R = np.linalg.qr(C.T, mode="complete")
    _check_rank(R[:p], "C")
    y1 = sla.solve_triangular(R[:p], g, trans="T")
    Q1, Q2 = Q[:, :p], Q[:, p:]
    if Q2.shape[1] == 0:
        return Q1 @ y1
    y2 = dense_lstsq(E @ Q2, f - E @ (Q1 @ y1))
    return Q1 @ y1 + Q2 @ y2


def estimate_condition(A, cap=SIZE_CAP):
    """sigma_1 / sigma_min from a dense SVD."""
    A = np.asarray(A, dtype=float)
    if A.size > cap:
        raise ValueError(f"matrix with {A.size} entries exceeds the cap {cap}")
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf
