"""Recursive skeletonization into telescoping HBS form.

A ~= D^(lam) + L^(lam) [ ... D^(1) + L^(1) D^(0) R^(1) ... ] R^(lam)

Level l holds one block per member of ``tree.level_blocks(l)``. A block's
active rows and columns are the skeletons of its sub-blocks one level down
(its own indices at the finest level). All index sets are original point
indices, so a level vector can live in a length-N (or M) array.
"""

from dataclasses import dataclass, field
import json
import struct
import time
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .kernels import KernelSpec, eval_block, proxy_col_block, proxy_row_block
from .linalg import column_id, row_id
from .tree import build_tree, smaller_side_depth


@dataclass
class CompressionConfig:
    eps: float = 1e-9
    leaf_capacity: int = 64
    proxy: bool = True
    proxy_ratio: float = 1.5      # proxy radius / box circumradius
    n_proxy: int | None = None    # default 64 in 2-D, 192 in 3-D

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.leaf_capacity < 1:
            raise ValueError("leaf capacity must be positive")


@dataclass
class Block:
    """One block at one level. ``rows``/``cols`` are the active indices,
    ``row_segs``/``col_segs`` the sub-block ids with segment lengths, and
    ``row_skel``/``col_skel`` positions into rows/cols."""

    node: int
    rows: np.ndarray
    cols: np.ndarray
    row_segs: list
    col_segs: list
    L: np.ndarray
    R: np.ndarray
    D: np.ndarray
    row_skel: np.ndarray
    col_skel: np.ndarray
    passthrough: bool = False

    @property
    def k_r(self):
        return self.L.shape[1]

    @property
    def k_c(self):
        return self.R.shape[0]

    @property
    def skel_rows(self):
        return self.rows[self.row_skel]

    @property
    def skel_cols(self):
        return self.cols[self.col_skel]


@dataclass
class LevelFactors:
    level: int
    blocks: list

    @property
    def n_compressed(self):
        return sum(not b.passthrough for b in self.blocks)


@dataclass
class CompressedMatrix:
    shape: tuple
    eps: float
    kernel: str
    levels: list                  # levels[l] for l = 1..lam; levels[0] unused
    root_rows: np.ndarray
    root_cols: np.ndarray
    root_row_segs: list
    root_col_segs: list
    D0: np.ndarray
    row_order: np.ndarray          # tree order of rows (x^(lam) ordering)
    col_order: np.ndarray
    lam_small: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def depth(self):
        return len(self.levels) - 1

    @property
    def K_r(self):
        return self.root_rows.size

    @property
    def K_c(self):
        return self.root_cols.size

    def level_stats(self):
        """(level, p_l, k_l) with p_l the number of compressed blocks and k_l
        their mean skeleton size (average of row and column ranks)."""
        out = []
        for l in range(self.depth, 0, -1):
            bl = [b for b in self.levels[l].blocks if not b.passthrough]
            k = np.mean([(b.k_r + b.k_c) / 2 for b in bl]) if bl else 0.0
            out.append((l, len(bl), float(k)))
        out.append((0, 1, (self.K_r + self.K_c) / 2))
        return out

    # ------------------------------------------------------------- apply
    def matvec(self, x):
        """A_eps @ x (also accepts an (N, k) array)."""
        x = np.asarray(x, dtype=float)
        M, N = self.shape
        if x.shape[0] != N:
            raise ValueError(f"expected {N} rows in x, got {x.shape[0]}")
        xs = [None] * (self.depth + 1)
        xs[self.depth] = x
        for l in range(self.depth, 0, -1):
            nxt = np.zeros_like(x)
            cur = xs[l]
            for b in self.levels[l].blocks:
                nxt[b.skel_cols] = b.R @ cur[b.cols]
            xs[l - 1] = nxt
        y = np.zeros((M,) + x.shape[1:])
        y[self.root_rows] = self.D0 @ xs[0][self.root_cols]
        for l in range(1, self.depth + 1):
            prev = y
            y = np.zeros_like(prev)
            cur = xs[l]
            for b in self.levels[l].blocks:
                y[b.rows] = b.D @ cur[b.cols] + b.L @ prev[b.skel_rows]
        return y

    def rmatvec(self, y):
        """A_eps^T @ y."""
        y = np.asarray(y, dtype=float)
        M, N = self.shape
        if y.shape[0] != M:
            raise ValueError(f"expected {M} rows in y, got {y.shape[0]}")
        ys = [None] * (self.depth + 1)
        ys[self.depth] = y
        for l in range(self.depth, 0, -1):
            nxt = np.zeros_like(y)
            for b in self.levels[l].blocks:
                nxt[b.skel_rows] = b.L.T @ ys[l][b.rows]
            ys[l - 1] = nxt
        x = np.zeros((N,) + y.shape[1:])
        x[self.root_cols] = self.D0.T @ ys[0][self.root_rows]
        for l in range(1, self.depth + 1):
            prev = x
            x = np.zeros_like(prev)
            for b in self.levels[l].blocks:
                x[b.cols] = b.D.T @ ys[l][b.rows] + b.R.T @ prev[b.skel_cols]
        return x

    def to_dense(self):
        return self.matvec(np.eye(self.shape[1]))

    # ------------------------------------------------------- serialization
    def save(self, path):
        arrays = {"root_rows": self.root_rows, "root_cols": self.root_cols,
                  "D0": self.D0, "row_order": self.row_order,
                  "col_order": self.col_order}
        meta = {"shape": list(self.shape), "eps": self.eps,
                "kernel": self.kernel, "lam_small": self.lam_small,
                "root_row_segs": self.root_row_segs,
                "root_col_segs": self.root_col_segs, "levels": []}
        for l in range(1, self.depth + 1):
            lv = []
            for i, b in enumerate(self.levels[l].blocks):
                key = f"{l}.{i}."
                for name in ("rows", "cols", "L", "R", "D", "row_skel", "col_skel"):
                    arrays[key + name] = getattr(b, name)
                lv.append({"node": b.node, "row_segs": b.row_segs,
                           "col_segs": b.col_segs, "passthrough": b.passthrough})
            meta["levels"].append(lv)
        _write_container(path, meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = _read_container(path)
        levels = [None]
        for l, lv in enumerate(meta["levels"], start=1):
            blocks = []
            for i, info in enumerate(lv):
                key = f"{l}.{i}."
                blocks.append(Block(info["node"], arrays[key + "rows"],
                                    arrays[key + "cols"],
                                    [tuple(s) for s in info["row_segs"]],
                                    [tuple(s) for s in info["col_segs"]],
                                    arrays[key + "L"], arrays[key + "R"],
                                    arrays[key + "D"], arrays[key + "row_skel"],
                                    arrays[key + "col_skel"], info["passthrough"]))
            levels.append(LevelFactors(l, blocks))
        return cls(tuple(meta["shape"]), meta["eps"], meta["kernel"], levels,
                   arrays["root_rows"], arrays["root_cols"],
                   [tuple(s) for s in meta["root_row_segs"]],
                   [tuple(s) for s in meta["root_col_segs"]], arrays["D0"],
                   arrays["row_order"], arrays["col_order"], meta["lam_small"])


MAGIC = b"HBSLSCM"
VERSION = 1


def _write_container(path, meta, arrays):
    """Magic, uint32 version, uint64 header length, JSON header, then the
    raw little-endian array payloads in header order."""
    index = []
    payload = []
    off = 0
    for name, a in arrays.items():
        a = np.asarray(a)
        kind = "f8" if a.dtype.kind == "f" else "i8"
        data = np.ascontiguousarray(a, dtype="<" + kind).tobytes()
        index.append({"name": name, "dtype": kind, "shape": list(a.shape),
                      "offset": off, "nbytes": len(data)})
        payload.append(data)
        off += len(data)
    head = json.dumps({"meta": meta, "arrays": index}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(head)))
        fh.write(head)
        for p in payload:
            fh.write(p)


def _read_container(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError("not a compressed-matrix file")
    ver, hlen = struct.unpack("<IQ", blob[len(MAGIC):len(MAGIC) + 12])
    if ver != VERSION:
        raise ValueError(f"unsupported container version {ver}")
    start = len(MAGIC) + 12
    head = json.loads(blob[start:start + hlen])
    base = start + hlen
    arrays = {}
    for e in head["arrays"]:
        raw = blob[base + e["offset"]:base + e["offset"] + e["nbytes"]]
        a = np.frombuffer(raw, dtype="<" + e["dtype"]).reshape(e["shape"])
        arrays[e["name"]] = a.astype(float if e["dtype"] == "f8" else int)
    return head["meta"], arrays


# ----------------------------------------------------------------- compress

def _zero_same_child(D, row_segs, col_segs):
    """Zero the entries of a parent block whose row and column come from the
    same sub-block (those interactions were kept at the finer level)."""
    r0 = 0
    rpos = {}
    for cid, n in row_segs:
        rpos[cid] = (r0, r0 + n)
        r0 += n
    c0 = 0
    for cid, n in col_segs:
        if cid in rpos:
            a, b = rpos[cid]
            D[a:b, c0:c0 + n] = 0.0
        c0 += n
    return D


class _Compressor:
    def __init__(self, spec, targets, sources, cfg):
        self.spec = spec
        self.T = targets
        self.S = sources
        self.cfg = cfg
        d = targets.dim
        self.n_proxy = cfg.n_proxy or (64 if d == 2 else 192)
        self.use_proxy = cfg.proxy and spec.has_proxy and d in (2, 3)
        if cfg.proxy and not self.use_proxy:
            warnings.warn(f"no proxy rule for {spec}; falling back to global "
                          "compression", RuntimeWarning, stacklevel=3)

    def A(self, r, c):
        return eval_block(self.spec, self.T, r, self.S, c)

    def compress_block(self, nd, rows, cols, own_r, own_c, lvl):
        """Row and column IDs of one block against everything else active at
        this level."""
        eps = self.cfg.eps
        if self.use_proxy:
            rad = self.cfg.proxy_ratio * nd.circumradius
            near_c = lvl.near_cols(nd.center, rad, own_c)
            near_r = lvl.near_rows(nd.center, rad, own_r)
            Bn = self.A(rows, near_c)
            Pr = proxy_row_block(self.spec, self.T, rows, nd.center, rad, self.n_proxy)
            rid = row_id(np.hstack([Bn, _match(Pr, Bn)]), eps)
            Cn = self.A(near_r, cols)
            Pc = proxy_col_block(self.spec, self.S, cols, nd.center, rad, self.n_proxy)
            cid = column_id(np.vstack([Cn, _match(Pc, Cn)]), eps)
        else:
            rid = row_id(self.A(rows, lvl.other_cols(own_c)), eps)
            cid = column_id(self.A(lvl.other_rows(own_r), cols), eps)
        return rid, cid


def _match(P, B):
    """Scale a proxy block to the Frobenius norm of the near-field block."""
    pn = np.linalg.norm(P)
    bn = np.linalg.norm(B)
    if pn == 0.0 or bn == 0.0:
        return P
    return P * (bn / pn)


class _LevelIndex:
    """Spatial lookup of the active indices at one level."""

    def __init__(self, tcoords, scoords, rows_owner, cols_owner):
        self.rows = np.nonzero(rows_owner >= 0)[0]
        self.cols = np.nonzero(cols_owner >= 0)[0]
        self.rows_owner = rows_owner
        self.cols_owner = cols_owner
        self.rtree = cKDTree(tcoords[self.rows]) if self.rows.size else None
        self.ctree = cKDTree(scoords[self.cols]) if self.cols.size else None

    def _near(self, tree, idx, owner, center, rad, me):
        if tree is None:
            return np.zeros(0, dtype=int)
        hit = np.asarray(tree.query_ball_point(center, rad), dtype=int)
        out = idx[hit] if hit.size else np.zeros(0, dtype=int)
        return np.sort(out[owner[out] != me])

    def near_rows(self, center, rad, me):
        return self._near(self.rtree, self.rows, self.rows_owner, center, rad, me)

    def near_cols(self, center, rad, me):
        return self._near(self.ctree, self.cols, self.cols_owner, center, rad, me)

    def other_rows(self, me):
        return self.rows[self.rows_owner[self.rows] != me]

    def other_cols(self, me):
        return self.cols[self.cols_owner[self.cols] != me]


def compress(spec, targets, sources, cfg=None, tree=None):
    """Compress the kernel matrix K(targets, sources) to tolerance cfg.eps."""
    if isinstance(spec, str):
        spec = KernelSpec.parse(spec)
    cfg = cfg or CompressionConfig()
    if len(targets) == 0 or len(sources) == 0:
        raise ValueError("empty target or source set")
    spec.check_dim(targets.dim)
    spec.check_dim(sources.dim)
    t0 = time.perf_counter()
    if tree is None:
        tree = build_tree(targets, sources, cfg.leaf_capacity)
    comp = _Compressor(spec, targets, sources, cfg)
    M, N = len(targets), len(sources)
    lam = tree.depth

    # active sets at the finest level: leaves own their indices
    act_rows = {}
    act_cols = {}
    segs_r = {}
    segs_c = {}
    for nd in tree.leaves():
        act_rows[nd.id] = nd.rows.astype(int)
        act_cols[nd.id] = nd.cols.astype(int)
        segs_r[nd.id] = [(nd.id, nd.rows.size)]
        segs_c[nd.id] = [(nd.id, nd.cols.size)]

    levels = [None] * (lam + 1)
    skel_r = {}
    skel_c = {}
    for l in range(lam, 0, -1):
        blocks_nd = tree.level_blocks(l)
        if l < lam:
            for nd in blocks_nd:
                subs = tree.sub_blocks(nd, l) if nd.depth == l else [nd]
                if nd.depth == l and not nd.is_leaf:
                    act_rows[nd.id] = np.concatenate([skel_r[s.id] for s in subs])
                    act_cols[nd.id] = np.concatenate([skel_c[s.id] for s in subs])
                    segs_r[nd.id] = [(s.id, skel_r[s.id].size) for s in subs]
                    segs_c[nd.id] = [(s.id, skel_c[s.id].size) for s in subs]
                else:
                    act_rows[nd.id] = skel_r[nd.id]
                    act_cols[nd.id] = skel_c[nd.id]
                    segs_r[nd.id] = [(nd.id, skel_r[nd.id].size)]
                    segs_c[nd.id] = [(nd.id, skel_c[nd.id].size)]
        rows_owner = np.full(M, -1)
        cols_owner = np.full(N, -1)
        for nd in blocks_nd:
            rows_owner[act_rows[nd.id]] = nd.id
            cols_owner[act_cols[nd.id]] = nd.id
        lvl = _LevelIndex(targets.coords, sources.coords, rows_owner, cols_owner)
        blocks = []
        for nd in blocks_nd:
            rows = act_rows[nd.id]
            cols = act_cols[nd.id]
            if l == lam:
                D = comp.A(rows, cols)
            elif nd.depth == l:
                D = _zero_same_child(comp.A(rows, cols), segs_r[nd.id], segs_c[nd.id])
            else:
                D = np.zeros((rows.size, cols.size))
            if nd.depth == l or l == lam:
                rid, cid = comp.compress_block(nd, rows, cols, nd.id, nd.id, lvl)
                b = Block(nd.id, rows, cols, segs_r[nd.id], segs_c[nd.id],
                          rid.interp, cid.interp, D, rid.skel, cid.skel)
            else:
                b = Block(nd.id, rows, cols, segs_r[nd.id], segs_c[nd.id],
                          np.eye(rows.size), np.eye(cols.size), D,
                          np.arange(rows.size), np.arange(cols.size), True)
            skel_r[nd.id] = b.skel_rows
            skel_c[nd.id] = b.skel_cols
            blocks.append(b)
        levels[l] = LevelFactors(l, blocks)

    root = tree.root
    if lam == 0:
        rr, rc = root.rows.astype(int), root.cols.astype(int)
        rsegs = [(0, rr.size)]
        csegs = [(0, rc.size)]
        D0 = comp.A(rr, rc)
    else:
        subs = tree.sub_blocks(root, 0)
        rr = np.concatenate([skel_r[s.id] for s in subs])
        rc = np.concatenate([skel_c[s.id] for s in subs])
        rsegs = [(s.id, skel_r[s.id].size) for s in subs]
        csegs = [(s.id, skel_c[s.id].size) for s in subs]
        D0 = _zero_same_child(comp.A(rr, rc), rsegs, csegs)
    cm = CompressedMatrix((M, N), cfg.eps, str(spec), levels, rr, rc, rsegs,
                          csegs, D0, tree.row_order(), tree.col_order(),
                          smaller_side_depth(targets, sources, cfg.leaf_capacity))
    cm.timings["compress"] = time.perf_counter() - t0
    cm.tree = tree
    return cm


def compress_dense(A):
    """Wrap an explicit matrix as a single-leaf compressed matrix."""
    A = np.asarray(A, dtype=float)
    M, N = A.shape
    return CompressedMatrix((M, N), 0.0, "dense", [None], np.arange(M),
                            np.arange(N), [(0, M)], [(0, N)], A.copy(),
                            np.arange(M), np.arange(N), 0)


def estimate_error(cm, apply_exact, n_probe=8, rng=None):
    """Randomized estimate of ||A - A_eps||_2 from Gaussian probes."""
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((cm.shape[1], n_probe))
    E = apply_exact(X) - cm.matvec(X)
    return float(np.max(np.linalg.norm(E, axis=0) / np.linalg.norm(X, axis=0)))
