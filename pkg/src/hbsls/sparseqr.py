"""Multifrontal Householder QR of a SparseBlockMatrix.

Columns are eliminated in groups (supernodes) in a fixed order. The front of
a group stacks every original block row whose leading group it is, plus the
update blocks left by earlier fronts; a dense Householder QR of the front
yields the R rows of the group, a new update block and rows that drop out
(the least-squares residual). Rows inside a front are sorted by decreasing
max-norm, which keeps Householder QR stable when row weights differ by
orders of magnitude.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.io
import scipy.sparse as sp
from scipy.linalg import lapack

from .embedding import Identity


class SingularFactorError(np.linalg.LinAlgError):
    pass


@dataclass
class Front:
    group: int
    pivots: list          # column blocks eliminated here
    others: list          # remaining column blocks of the front, in order
    inputs: list          # ("row", i) for original rows, ("upd", f) for fronts
    in_sizes: list
    perm: np.ndarray      # row sort applied before factoring
    qr: np.ndarray
    tau: np.ndarray
    p: int                # number of pivot columns
    t: int                # rows passed on as an update block
    R1: np.ndarray        # p x p upper triangular
    R2: np.ndarray        # p x width(others)

    @property
    def n_rows(self):
        return self.qr.shape[0]


class SparseQRFactors:
    def __init__(self, A, fronts, col_perm, pivot_offsets, shape, order):
        self.A = A
        self.fronts = fronts
        self.col_perm = col_perm          # R column j = original column col_perm[j]
        self.pivot_offsets = pivot_offsets
        self.shape = shape
        self.order = order                # column block -> position in elimination
        self._co = A.col_offsets

    @property
    def n(self):
        return self.shape[1]

    def _vec(self, v, size, what):
        v = np.asarray(v, dtype=float)
        if v.shape != (size,):
            raise ValueError(f"{what} must have length {size}, got shape {v.shape}")
        return v

    def _others_index(self, f):
        co = self._co
        if not f.others:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(co[j], co[j + 1]) for j in f.others])

    # ----------------------------------------------------------- Q ops
    def apply_qt(self, v):
        """Q^T v. The first n entries are the R-system right-hand side (in
        elimination order); the rest are the residual components."""
        v = self._vec(v, self.shape[0], "v")
        ro = self.A.row_offsets
        upd = {}
        head = []
        tail = []
        for f in self.fronts:
            seg = [v[ro[i]:ro[i + 1]] if kind == "row" else upd.pop(i)
                   for kind, i in f.inputs]
            w = np.concatenate(seg) if seg else np.zeros(0)
            w = w[f.perm]
            if w.size and f.tau.size:
                w = _ormqr(f.qr, f.tau, w, "T")
            head.append(w[:f.p])
            if f.t:
                upd[f.group] = w[f.p:f.p + f.t]
            tail.append(w[f.p + f.t:])
        if upd:
            raise AssertionError("unconsumed update blocks")
        return np.concatenate(head + tail)

    def apply_q(self, u):
        """Q u, the inverse of apply_qt."""
        u = self._vec(u, self.shape[0], "u")
        m, n = self.shape
        out = np.zeros(m)
        ro = self.A.row_offsets
        heads = np.split(u[:n], np.cumsum([f.p for f in self.fronts])[:-1])
        tail_sizes = [f.n_rows - f.p - f.t for f in self.fronts]
        tails = np.split(u[n:], np.cumsum(tail_sizes)[:-1])
        upd = {}
        for k in range(len(self.fronts) - 1, -1, -1):
            f = self.fronts[k]
            mid = upd.pop(f.group) if f.t else np.zeros(0)
            w = np.concatenate([heads[k], mid, tails[k]])
            if w.size and f.tau.size:
                w = _ormqr(f.qr, f.tau, w, "N")
            ww = np.empty_like(w)
            ww[f.perm] = w
            off = 0
            for (kind, i), s in zip(f.inputs, f.in_sizes):
                if kind == "row":
                    out[ro[i]:ro[i + 1]] = ww[off:off + s]
                else:
                    upd[i] = ww[off:off + s]
                off += s
        return out

    # ----------------------------------------------------------- R ops
    def solve_r(self, w):
        """Solve R z = w; both vectors are in elimination (pivot) order."""
        w = self._vec(w, self.n, "w")
        z = np.zeros(self.n)
        zc = np.zeros(self.n)   # same values indexed by original column
        po = self.pivot_offsets
        for k in range(len(self.fronts) - 1, -1, -1):
            f = self.fronts[k]
            if f.p == 0:
                continue
            rhs = w[po[k]:po[k] + f.p]
            if f.R2.size:
                rhs = rhs - f.R2 @ zc[self._others_index(f)]
            s = sla.solve_triangular(f.R1, rhs, lower=False)
            z[po[k]:po[k] + f.p] = s
            zc[self.col_perm[po[k]:po[k] + f.p]] = s
        return z

    def solve_rt(self, w):
        """Solve R^T z = w in elimination order."""
        w = self._vec(w, self.n, "w")
        acc = np.zeros(self.n)   # indexed by original column
        z = np.zeros(self.n)
        po = self.pivot_offsets
        for k, f in enumerate(self.fronts):
            if f.p == 0:
                continue
            cols = self.col_perm[po[k]:po[k] + f.p]
            s = sla.solve_triangular(f.R1, w[po[k]:po[k] + f.p] - acc[cols],
                                     lower=False, trans="T")
            z[po[k]:po[k] + f.p] = s
            if f.R2.size:
                acc[self._others_index(f)] += f.R2.T @ s
        return z

    def r_matvec(self, z):
        """R z in elimination order."""
        out = np.zeros(self.n)
        zc = np.zeros(self.n)
        zc[self.col_perm] = z
        po = self.pivot_offsets
        for k, f in enumerate(self.fronts):
            v = f.R1 @ z[po[k]:po[k] + f.p]
            if f.R2.size:
                v = v + f.R2 @ zc[self._others_index(f)]
            out[po[k]:po[k] + f.p] = v
        return out

    def R_sparse(self):
        """R as a scipy matrix with columns in original order (rows in
        elimination order)."""
        I, J, V = [], [], []
        po = self.pivot_offsets
        for k, f in enumerate(self.fronts):
            if f.p == 0:
                continue
            cols = np.concatenate([self.col_perm[po[k]:po[k] + f.p],
                                   self._others_index(f)])
            blk = np.hstack([f.R1, f.R2])
            r, c = np.nonzero(blk)
            I.append(po[k] + r)
            J.append(cols[c])
            V.append(blk[r, c])
        return sp.csr_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
                             shape=(self.n, self.n))

    def export_r(self, path):
        """Coordinate text export of R_sparse(), 1-based."""
        scipy.io.mmwrite(path, self.R_sparse().tocoo(), precision=17)

    def lstsq(self, b):
        """argmin ||A x - b|| in original column order."""
        z = self.solve_r(self.apply_qt(b)[:self.n])
        x = np.empty(self.n)
        x[self.col_perm] = z
        return x

    @property
    def nnz_r(self):
        return int(sum(f.p * (f.p + 1) // 2 + f.R2.size for f in self.fronts))

    def structural_nnz(self):
        """Predicted fill: full triangle of every pivot block plus the pivot
        rows times the front width."""
        co = self._co
        return int(sum(f.p * (f.p + 1) // 2
                       + f.p * sum(co[j + 1] - co[j] for j in f.others)
                       for f in self.fronts))


def _ormqr(qr, tau, w, trans):
    c = w.reshape(-1, 1)
    lwork = max(1, c.shape[1]) * 64
    cq, _, info = lapack.dormqr("L", trans, qr[:, :tau.size], tau, c, lwork)
    if info != 0:
        raise RuntimeError(f"dormqr failed with info={info}")
    return cq.ravel()


def factorize(A, groups=None, sing_tol=1e-14):
    """Sparse QR of a SparseBlockMatrix ``A`` eliminating column blocks in
    ``groups`` order (default: one group per block, in block order)."""
    nb = len(A.col_sizes)
    if groups is None:
        groups = [[j] for j in range(nb)]
    flat = [j for g in groups for j in g]
    if sorted(flat) != list(range(nb)):
        raise ValueError("groups must partition the column blocks")
    gpos = {}
    order = {}
    for k, g in enumerate(groups):
        for j in g:
            gpos[j] = k
            order[j] = len(order)
    co = A.col_offsets
    m, n = A.shape
    if m < n:
        raise ValueError(f"sparse QR needs at least as many rows as columns ({m} < {n})")

    pending = [[] for _ in groups]     # items: (("row", i) | ("upd", f), cols)
    for i, blk in enumerate(A.rows):
        if not blk:
            if A.row_sizes[i]:
                pending[-1].append((("row", i), []))
            continue
        lead = min(gpos[j] for j in blk)
        pending[lead].append((("row", i), sorted(blk, key=order.get)))

    fronts = []
    updates = {}
    col_perm = []
    pivot_offsets = []
    for k, g in enumerate(groups):
        items = pending[k]
        p = sum(A.col_sizes[j] for j in g)
        pivot_offsets.append(len(col_perm))
        col_perm.extend(np.concatenate([np.arange(co[j], co[j + 1]) for j in g])
                        if g else [])
        others = sorted({j for _, cs in items for j in cs if j not in g},
                        key=order.get)
        fcols = list(g) + others
        width = [A.col_sizes[j] for j in fcols]
        fo = np.concatenate([[0], np.cumsum(width)]).astype(int)
        where = {j: s for j, s in zip(fcols, range(len(fcols)))}
        blocks = []
        sizes = []
        for (kind, i), cs in items:
            if kind == "row":
                nr = A.row_sizes[i]
                F = np.zeros((nr, fo[-1]))
                for j, b in A.rows[i].items():
                    s = where[j]
                    if isinstance(b, Identity):
                        F[np.arange(nr), fo[s] + np.arange(nr)] = b.scale
                    else:
                        F[:, fo[s]:fo[s + 1]] = b
            else:
                U, ucols = updates.pop(i)
                nr = U.shape[0]
                F = np.zeros((nr, fo[-1]))
                uo = np.concatenate([[0], np.cumsum([A.col_sizes[j] for j in ucols])])
                for c, j in enumerate(ucols):
                    s = where[j]
                    F[:, fo[s]:fo[s + 1]] = U[:, uo[c]:uo[c + 1]]
            blocks.append(F)
            sizes.append(nr)
        F = np.vstack(blocks) if blocks else np.zeros((0, fo[-1]))
        if F.shape[0] < p:
            bad = A.col_labels[g[0]] if g else None
            raise SingularFactorError(f"column group {bad} is structurally rank "
                                      f"deficient ({F.shape[0]} rows for {p} columns)")
        rnorm = np.max(np.abs(F), axis=1) if F.size else np.zeros(F.shape[0])
        perm = np.argsort(-rnorm, kind="stable")
        F = F[perm]
        if F.size:
            qr, tau, _, info = lapack.dgeqrf(F)
            if info != 0:
                raise RuntimeError(f"dgeqrf failed with info={info}")
        else:
            qr, tau = F.copy(), np.zeros(0)
        kk = min(F.shape)
        Rf = np.triu(qr[:kk])
        R1 = Rf[:p, :p].copy()
        R2 = Rf[:p, p:].copy()
        t = max(0, min(F.shape[0], fo[-1]) - p)
        if others and t:
            U = Rf[p:p + t, p:].copy()
            updates[k] = (U, others)
            lead = gpos[others[0]]
            pending[lead].append((("upd", k), others))
        else:
            t = 0
        fronts.append(Front(k, list(g), others, [it[0] for it in items], sizes,
                            perm, qr, tau, p, t, R1, R2))
    if updates:
        raise AssertionError("update blocks left after the last front")

    diag = np.concatenate([np.abs(np.diag(f.R1)) for f in fronts if f.p])
    if diag.size and np.min(diag) < sing_tol * np.max(diag):
        j = int(np.argmin(diag))
        raise SingularFactorError(f"R is numerically singular at column {col_perm[j]}: "
                                  f"|R_jj| = {diag[j]:.3e}, max {np.max(diag):.3e}")
    return SparseQRFactors(A, fronts, np.asarray(col_perm, dtype=int),
                           np.asarray(pivot_offsets, dtype=int), (m, n), order)
