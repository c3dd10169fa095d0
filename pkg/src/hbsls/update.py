"""Least-squares updating and downdating without recompression.

A base system A x ~= b is prepared once (compression plus sparse QR). Added
rows C_+ (data b_+), deleted rows K, added columns B_+ and deleted columns L
enlarge it to the augmented problem

    min || E x - f ||   subject to   C x = g

with x = (x, x_+, x_-r, x_-c):

    E = [[A,  B_+, B_-r, B_-c],      f = [b; b_+]
         [C_+, D_+, 0,   D_- ]]
    C = [[C_-r, B_+[K], I, 0],       g = [d; 0]
         [C_-c, 0,      0, I]]

where B_-r selects the deleted rows, C_-r = A[K, :], d = b[K], B_-c =
A[:, L], C_-c selects the deleted columns and D_- = C_+[:, L]. The deletion
auxiliaries enter C through identity blocks. The B_+[K] block makes the
deleted rows vanish from the objective even when columns are added at the
same time.

Two solution paths share the base pseudoinverse A^+:

* pure row addition (``method="rows"``) starts from x_b = A^+ b, the only
  A^+ application in setup, and solves the enlarged normal equations for
  the correction, right-preconditioned by G = (A^T A)^-1 = A^+ A^+T:
  (I + C_+^T C_+ G) z = C_+^T (b_+ - C_+ x_b), x = x_b + G z;
* ``method="rows_left"`` iterates the left-preconditioned system
  (I + C_+^T C_+) x = A^+ b + C_+^T b_+ with one application of A^+ in total.
  It equals the enlarged least-squares solution only when A^T A = I, and is
  kept as a cheap approximate update;
* the general path (``method="normal"``) removes the identity-coupled
  auxiliaries exactly, x_-r = d - C_-r x and x_-c = -x_L, and iterates the
  reduced normal equations preconditioned with (A^T A)^-1 = A^+ A^+T. The
  deleted columns then carry no information, and x_L is set to zero.
"""

from dataclasses import dataclass, field
import time

import numpy as np
import scipy.sparse.linalg as spla

from .kernels import eval_block
from .geometry import PointSet


@dataclass
class ModificationSpec:
    """Explicit modification blocks.

    add_rows     p_r x N block C_+ of new rows against the base columns
    add_rhs      p_r data values b_+
    add_cols     M x p_c block B_+ of new columns against the base rows
    add_corner   p_r x p_c block D_+ of new rows against new columns
    del_rows     indices K of base rows to delete
    del_cols     indices L of base columns to delete
    """

    add_rows: np.ndarray | None = None
    add_rhs: np.ndarray | None = None
    add_cols: np.ndarray | None = None
    add_corner: np.ndarray | None = None
    del_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    del_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.del_rows = np.asarray(self.del_rows, dtype=int).reshape(-1)
        self.del_cols = np.asarray(self.del_cols, dtype=int).reshape(-1)
        for name in ("add_rows", "add_cols", "add_corner"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_2d(np.asarray(v, dtype=float)))
        if self.add_rhs is not None:
            self.add_rhs = np.asarray(self.add_rhs, dtype=float).reshape(-1)

    @property
    def p_r(self):
        return 0 if self.add_rows is None else self.add_rows.shape[0]

    @property
    def p_c(self):
        return 0 if self.add_cols is None else self.add_cols.shape[1]

    @property
    def q_r(self):
        return self.del_rows.size

    @property
    def q_c(self):
        return self.del_cols.size

    @property
    def rows_only(self):
        return self.p_c == 0 and self.q_r == 0 and self.q_c == 0

    def validate(self, M, N):
        for name, idx, n in (("row", self.del_rows, M), ("column", self.del_cols, N)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"deleted {name} index out of range")
            if np.unique(idx).size != idx.size:
                raise ValueError(f"duplicate deleted {name} index")
        p_r, p_c = self.p_r, self.p_c
        if p_r and self.add_rows.shape[1] != N:
            raise ValueError(f"added rows must have {N} columns")
        if p_r and (self.add_rhs is None or self.add_rhs.size != p_r):
            raise ValueError("added rows need one data value each")
        if p_c and self.add_cols.shape[0] != M:
            raise ValueError(f"added columns must have {M} rows")
        if p_r and p_c:
            if self.add_corner is None or self.add_corner.shape != (p_r, p_c):
                raise ValueError(f"corner block must be {p_r} x {p_c}")
        if M - self.q_r + p_r < N - self.q_c + p_c:
            raise NotImplementedError("modifications that make the system "
                                      "underdetermined are not supported")

    @classmethod
    def from_points(cls, kernel, targets, sources, add_targets=None,
                    add_values=None, add_sources=None, del_rows=(), del_cols=()):
        """Build the blocks by evaluating the kernel at new points.

        An added point that coincides with a deleted one is an input error:
        the pair would cancel rather than modify the system.
        """
        for new, old, idx, name in ((add_targets, targets, del_rows, "target"),
                                    (add_sources, sources, del_cols, "source")):
            idx = np.asarray(idx, dtype=int).ravel()
            if new is None or idx.size == 0:
                continue
            xn = new.coords if hasattr(new, "coords") else np.asarray(new)
            xo = old.coords[idx]
            if np.any(np.all(xn[:, None, :] == xo[None, :, :], axis=2)):
                raise ValueError(f"added {name} coincides with a deleted one")
        C = Bc = Dc = None
        if add_targets is not None:
            C = eval_block(kernel, add_targets, np.arange(len(add_targets)),
                           sources, np.arange(len(sources)))
        if add_sources is not None:
            Bc = eval_block(kernel, targets, np.arange(len(targets)),
                            add_sources, np.arange(len(add_sources)))
            if add_targets is not None:
                Dc = eval_block(kernel, add_targets, np.arange(len(add_targets)),
                                add_sources, np.arange(len(add_sources)))
        return cls(C, add_values, Bc, Dc, del_rows, del_cols)


def load_modification(path):
    """Read a modification file.

    Sections start with a bracketed name; '#' starts a comment.
      [add_rows]        one line per new target: coordinates then data value
      [delete_rows]     base row indices (0-based)
      [add_columns]     one line per new source: coordinates
      [delete_columns]  base column indices (0-based)
    Returns a dict with PointSets / index arrays ready for
    ``ModificationSpec.from_points``.
    """
    sec = None
    data = {"add_rows": [], "delete_rows": [], "add_columns": [],
            "delete_columns": []}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                sec = line.strip("[] ").lower()
                if sec not in data:
                    raise ValueError(f"unknown section [{sec}]")
                continue
            if sec is None:
                raise ValueError("data before the first section header")
            vals = line.replace(",", " ").split()
            if sec in ("delete_rows", "delete_columns"):
                data[sec].extend(int(v) for v in vals)
            else:
                data[sec].append([float(v) for v in vals])
    out = {"del_rows": np.array(data["delete_rows"], dtype=int),
           "del_cols": np.array(data["delete_columns"], dtype=int),
           "add_targets": None, "add_values": None, "add_sources": None}
    if data["add_rows"]:
        a = np.array(data["add_rows"])
        out["add_targets"] = PointSet(a[:, :-1])
        out["add_values"] = a[:, -1]
    if data["add_columns"]:
        out["add_sources"] = PointSet(np.array(data["add_columns"]))
    return out


class AugmentedSystem:
    """The augmented problem built on a prepared base system."""

    def __init__(self, prepared, b, mod):
        M, N = prepared.shape
        b = np.asarray(b, dtype=float)
        if b.shape != (M,):
            raise ValueError(f"base right-hand side must have shape ({M},)")
        mod.validate(M, N)
        self.base = prepared
        self.b = b
        self.mod = mod
        self.mu = prepared.cfg.mu if prepared.variant == "tikhonov" else 0.0
        cm = prepared.cm
        K, L = mod.del_rows, mod.del_cols
        # blocks that touch the base operator come from A_eps itself
        self.C_mr = cm.rmatvec(_unit(M, K)).T if K.size else np.zeros((0, N))
        self.B_mc = cm.matvec(_unit(N, L)) if L.size else np.zeros((M, 0))
        self.d = b[K]
        self.D_m = mod.add_rows[:, L] if (mod.p_r and L.size) else np.zeros((mod.p_r, L.size))

    @property
    def shape(self):
        M, N = self.base.shape
        m = self.mod
        rows = M + m.p_r
        cols = N + m.p_c + m.q_r + m.q_c
        return rows, cols

    @property
    def side(self):
        M, N = self.base.shape
        m = self.mod
        return "left" if M - m.q_r + m.p_r >= N - m.q_c + m.p_c else "right"

    def dense(self, A=None):
        """Dense (E, C, f, g); A defaults to the compressed base matrix."""
        M, N = self.base.shape
        m = self.mod
        A = self.base.cm.to_dense() if A is None else A
        p_r, p_c, q_r, q_c = m.p_r, m.p_c, m.q_r, m.q_c
        E = np.zeros((M + p_r, N + p_c + q_r + q_c))
        E[:M, :N] = A
        c1, c2, c3 = N + p_c, N + p_c + q_r, N + p_c + q_r + q_c
        if p_c:
            E[:M, N:c1] = m.add_cols
        E[m.del_rows, c1 + np.arange(q_r)] = 1.0
        E[:M, c2:c3] = A[:, m.del_cols]
        if p_r:
            E[M:, :N] = m.add_rows
            if p_c:
                E[M:, N:c1] = m.add_corner
            E[M:, c2:c3] = self.D_m
        C = np.zeros((q_r + q_c, E.shape[1]))
        C[:q_r, :N] = A[m.del_rows]
        if p_c:
            C[:q_r, N:c1] = m.add_cols[m.del_rows]
        C[:q_r, c1:c2] = np.eye(q_r)
        C[q_r + np.arange(q_c), m.del_cols] = 1.0
        C[q_r:, c2:c3] = np.eye(q_c)
        f = np.concatenate([self.b, m.add_rhs if p_r else np.zeros(0)])
        g = np.concatenate([self.d, np.zeros(q_c)])
        return E, C, f, g


def _unit(n, idx):
    U = np.zeros((n, len(idx)))
    U[idx, np.arange(len(idx))] = 1.0
    return U


def build_augmented(prepared, b, mod):
    return AugmentedSystem(prepared, b, mod)


@dataclass
class UpdateReport:
    x: np.ndarray              # effective solution on kept + added columns
    x_full: np.ndarray         # all augmented unknowns (x, x_+, x_-r, x_-c)
    gmres_iterations: int
    gmres_residuals: list
    converged: bool
    pinv_applications: int     # total, setup included
    setup_applications: int    # before the first GMRES iteration
    method: str
    side: str
    fit_residual: float        # ||E x - f|| / ||f|| of the augmented problem
    time: float


def _gmres(op, rhs, tol, max_dim, x0=None):
    hist = []
    x, info = spla.gmres(op, rhs, x0=x0, rtol=tol, atol=0.0, restart=max_dim,
                         maxiter=1, callback=lambda r: hist.append(float(r)),
                         callback_type="pr_norm")
    return x, info == 0, hist


def solve_augmented_gmres(aug, method=None, tol=1e-10, max_dim=200, n_iter=2):
    """Solve the augmented least-squares problem reusing the base factors.

    ``method`` is "rows" (pure row addition), "rows_left" (the approximate
    left-preconditioned row update) or "normal" (any modification); the
    default picks "rows" when possible.
    """
    t0 = time.perf_counter()
    mod = aug.mod
    if aug.side != "left":
        raise NotImplementedError("right-preconditioned updates are not supported")
    if method is None:
        method = "rows" if mod.rows_only else "normal"
    ps = aug.base
    before = ps.n_applications
    M, N = ps.shape
    if method in ("rows", "rows_left"):
        if not mod.rows_only:
            raise ValueError(f"method {method!r} handles pure row additions only")
        Cp = mod.add_rows if mod.p_r else np.zeros((0, N))
        bp = mod.add_rhs if mod.p_r else np.zeros(0)
        xb = ps.apply(aug.b)
        setup = ps.n_applications - before
        if method == "rows_left":
            rhs = xb + Cp.T @ bp
            op = spla.LinearOperator((N, N), matvec=lambda v: v + Cp.T @ (Cp @ v),
                                     dtype=float)
            # x0 = rhs is exact when nothing is added
            x, ok, hist = _gmres(op, rhs, tol, max_dim, x0=rhs.copy())
        else:
            G = _gram_inv(ps, n_iter)
            rhs = Cp.T @ (bp - Cp @ xb)
            op = spla.LinearOperator((N, N), matvec=lambda z: z + Cp.T @ (Cp @ G(z)),
                                     dtype=float)
            if np.any(rhs):
                z, ok, hist = _gmres(op, rhs, tol, max_dim)
                x = xb + G(z)
            else:
                x, ok, hist = xb, True, []
        x_full = x
        xe = x
    elif method == "normal":
        xe, x_full, ok, hist, setup = _solve_normal(aug, tol, max_dim, n_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    E, f = _objective(aug, x_full)
    fit = float(np.linalg.norm(E - f) / max(np.linalg.norm(f), 1e-300))
    return UpdateReport(xe, x_full, len(hist), hist, ok,
                        ps.n_applications - before, setup, method, aug.side, fit,
                        time.perf_counter() - t0)


def _gram_inv(ps, n_iter):
    """v -> (A^T A + mu^2 I)^-1 v as A^+ A^+T (two applications)."""
    def G(v):
        if ps.variant == "tikhonov":
            bb, cb = ps.apply_adjoint(v, n_iter)
            return ps.apply(bb, n_iter=n_iter, c=cb)
        return ps.apply(ps.apply_adjoint(v, n_iter), n_iter=n_iter)
    return G


def _objective(aug, x_full):
    """(E x, f) for the augmented objective rows."""
    ps, m = aug.base, aug.mod
    M, N = ps.shape
    x = x_full[:N]
    o = N
    xp = x_full[o:o + m.p_c]; o += m.p_c
    xr = x_full[o:o + m.q_r]; o += m.q_r
    xc = x_full[o:o + m.q_c]
    top = ps.cm.matvec(x) + aug.B_mc @ xc
    if m.p_c:
        top = top + m.add_cols @ xp
    top[m.del_rows] += xr
    parts = [top]
    f = [aug.b]
    if m.p_r:
        bot = m.add_rows @ x + aug.D_m @ xc
        if m.p_c:
            bot = bot + m.add_corner @ xp
        parts.append(bot)
        f.append(m.add_rhs)
    return np.concatenate(parts), np.concatenate(f)


def _solve_normal(aug, tol, max_dim, n_iter):
    """Reduced normal equations with the base inverse Gram matrix as
    preconditioner."""
    ps, m = aug.base, aug.mod
    M, N = ps.shape
    mu = aug.mu
    keep_r = np.ones(M, bool)
    keep_r[m.del_rows] = False
    keep_c = np.ones(N, bool)
    keep_c[m.del_cols] = False
    p_c = m.p_c
    n = N + p_c
    Cp = m.add_rows if m.p_r else np.zeros((0, N))
    Dp = m.add_corner if (m.p_r and p_c) else np.zeros((m.p_r, p_c))
    Bp = m.add_cols if p_c else np.zeros((M, 0))
    Bk = Bp * keep_r[:, None]

    def split(z):
        return z[:N] * keep_c, z[N:]

    def fwd(z):
        x, xp = split(z)
        top = (ps.cm.matvec(x) + Bp @ xp) * keep_r
        return top, mu * x, mu * xp, Cp @ x + Dp @ xp

    def adj(top, ax, axp, bot):
        top = top * keep_r
        gx = (ps.cm.rmatvec(top) + mu * ax + Cp.T @ bot) * keep_c
        gp = Bp.T @ top + mu * axp + Dp.T @ bot
        return np.concatenate([gx, gp])

    def normal(z):
        return adj(*fwd(z))

    gram_inv = _gram_inv(ps, n_iter)

    H = Bk.T @ Bk + Dp.T @ Dp + mu**2 * np.eye(p_c)
    Hinv = np.linalg.inv(H) if p_c else np.zeros((0, 0))

    def precond(v):
        out = np.empty(n)
        out[:N] = gram_inv(v[:N] * keep_c) * keep_c
        out[N:] = Hinv @ v[N:]
        return out

    bp = m.add_rhs if m.p_r else np.zeros(0)
    before = ps.n_applications
    rhs = precond(adj(aug.b * keep_r, np.zeros(N), np.zeros(p_c), bp))
    setup = ps.n_applications - before
    op = spla.LinearOperator((n, n), matvec=lambda z: precond(normal(z)), dtype=float)
    z, ok, hist = _gmres(op, rhs, tol, max_dim)
    x, xp = split(z)
    xr = aug.d - aug.C_mr @ x - Bp[m.del_rows] @ xp
    xc = -x[m.del_cols]
    x_full = np.concatenate([x, xp, xr, xc])
    xe = np.concatenate([x[keep_c], xp])
    return xe, x_full, ok, hist, setup
