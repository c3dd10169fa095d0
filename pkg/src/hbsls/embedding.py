"""Sparse block embedding of a compressed matrix.

Unknown order: x^(lam), y^(lam), x^(lam-1), y^(lam-1), ..., x^(1), y^(1), x^(0).
E is the block row [D^(lam), L^(lam)]; C holds, for each level l, the rows
R^(l) x^(l) - x^(l-1) and -y^(l) + D^(l-1) x^(l-1) + L^(l-1) y^(l-1).
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp


class Identity:
    """Scaled identity block."""

    __slots__ = ("n", "scale")

    def __init__(self, n, scale=1.0):
        self.n = n
        self.scale = float(scale)

    @property
    def shape(self):
        return (self.n, self.n)

    def dense(self):
        return self.scale * np.eye(self.n)


class SparseBlockMatrix:
    """Matrix of dense or scaled-identity blocks on a fine block partition.

    ``rows[i]`` is the block row i as a dict {col block: block}; ``col_sizes``
    and ``row_sizes`` give the partition.
    """

    def __init__(self, col_sizes, col_labels=None):
        self.col_sizes = list(col_sizes)
        self.col_labels = col_labels or [None] * len(col_sizes)
        self.row_sizes = []
        self.row_labels = []
        self.rows = []

    def add_row(self, size, blocks, label=None):
        for j, b in blocks.items():
            if b.shape != (size, self.col_sizes[j]):
                raise ValueError(f"block {label}->{self.col_labels[j]} has shape "
                                 f"{b.shape}, expected {(size, self.col_sizes[j])}")
        self.row_sizes.append(size)
        self.row_labels.append(label)
        self.rows.append(dict(blocks))
        return len(self.rows) - 1

    @property
    def shape(self):
        return (sum(self.row_sizes), sum(self.col_sizes))

    @property
    def row_offsets(self):
        return np.concatenate([[0], np.cumsum(self.row_sizes)]).astype(int)

    @property
    def col_offsets(self):
        return np.concatenate([[0], np.cumsum(self.col_sizes)]).astype(int)

    def scaled(self, s):
        out = SparseBlockMatrix(self.col_sizes, self.col_labels)
        for n, lab, blk in zip(self.row_sizes, self.row_labels, self.rows):
            out.add_row(n, {j: (Identity(b.n, s * b.scale) if isinstance(b, Identity)
                                else s * b) for j, b in blk.items()}, lab)
        return out

    @staticmethod
    def vstack(mats):
        out = SparseBlockMatrix(mats[0].col_sizes, mats[0].col_labels)
        for m in mats:
            if m.col_sizes != out.col_sizes:
                raise ValueError("column partitions differ")
            for n, lab, blk in zip(m.row_sizes, m.row_labels, m.rows):
                out.add_row(n, blk, lab)
        return out

    def block_dense(self, i, j):
        b = self.rows[i].get(j)
        if b is None:
            return np.zeros((self.row_sizes[i], self.col_sizes[j]))
        return b.dense() if isinstance(b, Identity) else b

    def to_scipy(self):
        ro, co = self.row_offsets, self.col_offsets
        I, J, V = [], [], []
        for i, blk in enumerate(self.rows):
            for j, b in blk.items():
                if isinstance(b, Identity):
                    k = np.arange(b.n)
                    I.append(ro[i] + k)
                    J.append(co[j] + k)
                    V.append(np.full(b.n, b.scale))
                else:
                    r, c = np.nonzero(b)
                    I.append(ro[i] + r)
                    J.append(co[j] + c)
                    V.append(b[r, c])
        if not I:
            return sp.csr_matrix(self.shape)
        return sp.csr_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
                             shape=self.shape)

    def matvec(self, x):
        return self.to_csr() @ x

    def rmatvec(self, y):
        return self.to_csr().T @ y

    def to_csr(self):
        if getattr(self, "_csr", None) is None or self._csr.shape != self.shape:
            self._csr = self.to_scipy()
        return self._csr

    @property
    def nnz(self):
        return self.to_csr().nnz

    def export(self, path):
        """Coordinate text export, one (row, col, value) per line, 1-based."""
        scipy.io.mmwrite(path, self.to_scipy().tocoo(), precision=17)


@dataclass
class ColBlock:
    kind: str        # "x" or "y"
    level: int
    node: int
    sub: int         # sub-block id for x segments, node id for y
    index: np.ndarray  # original indices carried by the variables


@dataclass
class Embedding:
    E: SparseBlockMatrix
    C: SparseBlockMatrix
    cols: list                 # ColBlock per column block
    groups: list               # elimination groups (lists of column blocks)
    x_blocks: list             # column blocks that make up x^(lam)
    x_index: np.ndarray        # original column id of each x^(lam) entry
    b_index: np.ndarray        # original row id of each E row
    depth: int

    @property
    def n_unknowns(self):
        return sum(self.E.col_sizes)

    def x_slices(self):
        co = self.E.col_offsets
        return [(co[j], co[j + 1]) for j in self.x_blocks]

    def lift_b(self, b):
        """Original row order -> E row order."""
        return np.asarray(b, dtype=float)[self.b_index]

    def unlift_b(self, v):
        out = np.empty_like(v)
        out[self.b_index] = v
        return out

    def lift_x(self, xfull):
        """x (original order) -> its slot in a full embedding vector."""
        v = np.zeros(self.n_unknowns)
        pos = np.concatenate([np.arange(a, b) for a, b in self.x_slices()])
        v[pos] = np.asarray(xfull, dtype=float)[self.x_index]
        return v

    def lift(self, xfull):
        """Full embedding vector for x with every auxiliary set by the
        identifications x^(l-1) = R^(l) x^(l) and y^(l) = D^(l-1) x^(l-1)
        + L^(l-1) y^(l-1), so that C v = 0 and E v = A_eps x."""
        v = self.lift_x(xfull)
        co = self.C.col_offsets
        rows = list(zip(self.C.rows, self.C.row_labels))
        # R links run fine to coarse, D links coarse to fine
        order = ([r for r in rows if r[1][0] == "R"]
                 + sorted((r for r in rows if r[1][0] == "D"), key=lambda r: r[1][1]))
        for blk, _ in order:
            (tgt,) = [j for j, b in blk.items() if isinstance(b, Identity)]
            acc = 0.0
            for j, b in blk.items():
                if j != tgt:
                    acc = acc + b @ v[co[j]:co[j + 1]]
            v[co[tgt]:co[tgt + 1]] = acc
        return v

    def x_of(self, v):
        """Extract x^(lam) in original order from an embedding vector."""
        pos = np.concatenate([np.arange(a, b) for a, b in self.x_slices()])
        out = np.empty(self.x_index.size)
        out[self.x_index] = v[pos]
        return out

    def x_positions(self):
        return np.concatenate([np.arange(a, b) for a, b in self.x_slices()])

    def identity_rows(self, scale=1.0):
        """Block rows scale * I_1 selecting x^(lam)."""
        S = SparseBlockMatrix(self.E.col_sizes, self.E.col_labels)
        for j in self.x_blocks:
            S.add_row(self.E.col_sizes[j], {j: Identity(self.E.col_sizes[j], scale)},
                      ("I1", self.cols[j].node))
        return S


def _split_cols(mat, segs):
    out = []
    c0 = 0
    for sid, n in segs:
        out.append((sid, mat[:, c0:c0 + n]))
        c0 += n
    return out


def assemble_embedding(cm):
    """Build E, C and the elimination order for a compressed matrix."""
    lam = cm.depth
    sizes, labels, cols = [], [], []
    key = {}

    def new_col(kind, level, node, sub, index):
        key[kind, level, node, sub] = len(cols)
        cols.append(ColBlock(kind, level, node, sub, np.asarray(index, dtype=int)))
        sizes.append(len(index))
        labels.append((kind, level, node, sub))

    groups = []
    for l in range(lam, 0, -1):
        xg = []
        for b in cm.levels[l].blocks:
            g = []
            c0 = 0
            for sid, n in b.col_segs:
                new_col("x", l, b.node, sid, b.cols[c0:c0 + n])
                g.append(len(cols) - 1)
                c0 += n
            xg.append(g)
        yg = []
        for b in cm.levels[l].blocks:
            new_col("y", l, b.node, b.node, b.skel_rows)
            yg.append([len(cols) - 1])
        groups += xg + yg
    g = []
    c0 = 0
    for sid, n in cm.root_col_segs:
        new_col("x", 0, -1, sid, cm.root_cols[c0:c0 + n])
        g.append(len(cols) - 1)
        c0 += n
    groups.append(g)

    E = SparseBlockMatrix(sizes, labels)
    C = SparseBlockMatrix(sizes, labels)

    if lam == 0:
        x_blocks = [key["x", 0, -1, s] for s, _ in cm.root_col_segs]
        E.add_row(cm.D0.shape[0], {x_blocks[0]: cm.D0}, ("E", 0))
        return Embedding(E, C, cols, groups, x_blocks, cm.root_cols.copy(),
                         cm.root_rows.copy(), 0)

    # parent lookup: sub-block id -> owning block at the next coarser level
    def parents(level):
        if level == 0:
            return {s: -1 for s, _ in cm.root_col_segs}
        return {s: b.node for b in cm.levels[level].blocks for s, _ in b.col_segs}

    for b in cm.levels[lam].blocks:
        blk = {key["x", lam, b.node, b.node]: b.D}
        if b.k_r:
            blk[key["y", lam, b.node, b.node]] = b.L
        E.add_row(b.rows.size, blk, ("E", b.node))
    x_blocks = [key["x", lam, b.node, b.node] for b in cm.levels[lam].blocks]
    x_index = np.concatenate([b.cols for b in cm.levels[lam].blocks])
    b_index = np.concatenate([b.rows for b in cm.levels[lam].blocks])

    for l in range(lam, 0, -1):
        par = parents(l - 1)
        if l - 1 == 0:
            coarse = {-1: (cm.root_row_segs, cm.root_col_segs, cm.D0, None)}
        else:
            coarse = {p.node: (p.row_segs, p.col_segs, p.D, p.L)
                      for p in cm.levels[l - 1].blocks}
        for b in cm.levels[l].blocks:
            pid = par[b.node]
            # R^(l) x^(l) - x^(l-1)
            blk = {key["x", l, b.node, sid]: m
                   for sid, m in _split_cols(b.R, b.col_segs)}
            blk[key["x", l - 1, pid, b.node]] = Identity(b.k_c, -1.0)
            C.add_row(b.k_c, blk, ("R", l, b.node))
        for b in cm.levels[l].blocks:
            pid = par[b.node]
            rsegs, csegs, Dp, Lp = coarse[pid]
            r0 = 0
            for sid, n in rsegs:
                if sid == b.node:
                    break
                r0 += n
            rows = slice(r0, r0 + b.k_r)
            blk = {key["y", l, b.node, b.node]: Identity(b.k_r, -1.0)}
            for sid, m in _split_cols(Dp[rows], csegs):
                if m.size and np.any(m):
                    blk[key["x", l - 1, pid, sid]] = m
            if Lp is not None and Lp.shape[1]:
                blk[key["y", l - 1, pid, pid]] = Lp[rows]
            C.add_row(b.k_r, blk, ("D", l, b.node))
    return Embedding(E, C, cols, groups, x_blocks, x_index, b_index, lam)


def assemble_weighted(emb, tau, variant="overdetermined", mu=0.0):
    """Stack the weighted matrix for one of the three solve variants.

    Returns (A_tau, E_dc, C_dc): the stacked matrix and the objective and
    constraint parts seen by deferred correction (A_tau = [E_dc; tau C_dc]).
    """
    if variant == "overdetermined":
        Edc, Cdc = emb.E, emb.C
    elif variant == "tikhonov":
        if not mu > 0:
            raise ValueError("Tikhonov variant needs mu > 0")
        Edc = SparseBlockMatrix.vstack([emb.E, emb.identity_rows(mu)])
        Cdc = emb.C
    elif variant == "underdetermined":
        Edc = emb.identity_rows(1.0)
        Cdc = SparseBlockMatrix.vstack([emb.E, emb.C])
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return SparseBlockMatrix.vstack([Edc, Cdc.scaled(tau)]), Edc, Cdc
