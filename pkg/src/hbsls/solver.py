"""Deferred-correction least-squares solvers on the sparse embedding."""

from dataclasses import dataclass, field, asdict
import json
import time
import warnings

import numpy as np

from .embedding import assemble_embedding, assemble_weighted
from .kernels import KernelSpec, apply_true
from .skeleton import CompressionConfig, compress
from .sparseqr import factorize

EPS = np.finfo(float).eps
DEFAULT_TAU = EPS ** (-1.0 / 3.0)


class NotConvergedWarning(RuntimeWarning):
    pass


@dataclass
class SolverConfig:
    eps: float = 1e-9
    tau: float = DEFAULT_TAU
    mu: float = 0.0
    leaf_capacity: int = 64
    proxy: bool = True
    proxy_ratio: float = 1.5
    n_proxy: int | None = None
    max_iter: int = 8
    dc_tol: float = 1e-12
    oracle_cap: float = 1e7

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def compression(self):
        return CompressionConfig(self.eps, self.leaf_capacity, self.proxy,
                                 self.proxy_ratio, self.n_proxy)


@dataclass
class DCResult:
    x: np.ndarray
    n_iter: int
    history: list
    converged: bool


def deferred_correction(lstsq, E, C, f, g, tau, max_iter=8, tol=1e-12,
                        n_iter=None):
    """Solve min ||E x - f|| subject to C x = g.

    ``lstsq(rhs)`` must return argmin ||[E; tau C] x - rhs||. Every run makes
    at least one correction; with ``n_iter`` set exactly that many are made,
    which makes the map (f, g) -> x linear.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    x = lstsq(np.concatenate([f, tau * g]))
    r = f - E @ x
    w = g - C @ x
    lam = tau**2 * w
    hist = [float(np.linalg.norm(w))]
    gnorm = float(np.linalg.norm(g))
    steps = n_iter if n_iter is not None else max_iter
    converged = False
    k = 0
    for k in range(1, steps + 1):
        dx = lstsq(np.concatenate([r, tau * w + lam / tau]))
        x = x + dx
        r = r - E @ dx
        w = w - C @ dx
        lam = lam + tau**2 * w
        hist.append(float(np.linalg.norm(w)))
        if hist[-1] <= tol * (gnorm + np.linalg.norm(x)):
            converged = True
            if n_iter is None:
                break
    return DCResult(x, k, hist, converged)


class PreparedSystem:
    """A compressed matrix with its embedding factorized for one variant.

    ``n_applications`` counts pseudoinverse applications.
    """

    def __init__(self, cm, cfg, variant):
        self.cm = cm
        self.cfg = cfg
        self.variant = variant
        t0 = time.perf_counter()
        self.emb = assemble_embedding(cm)
        self.A_tau, Edc, Cdc = assemble_weighted(self.emb, cfg.tau, variant, cfg.mu)
        self.E = Edc.to_csr()
        self.C = Cdc.to_csr()
        self.factors = factorize(self.A_tau, self.emb.groups)
        self.t_qr = time.perf_counter() - t0
        self.n_applications = 0
        self.last = None

    @property
    def shape(self):
        return self.cm.shape

    def _rhs(self, b, c=None):
        """(f, g) for deferred correction in embedding row order; ``c`` is
        the optional right-hand side of the Tikhonov rows mu x ~= c."""
        b = np.asarray(b, dtype=float)
        M, N = self.cm.shape
        if b.shape != (M,):
            raise ValueError(f"right-hand side must have shape ({M},)")
        nC = self.emb.C.shape[0]
        bl = self.emb.lift_b(b)
        if self.variant == "overdetermined":
            return bl, np.zeros(nC)
        if self.variant == "tikhonov":
            cl = np.zeros(N) if c is None else np.asarray(c, float)[self.emb.x_index]
            return np.concatenate([bl, cl]), np.zeros(nC)
        return np.zeros(N), np.concatenate([bl, np.zeros(nC)])

    def weighted_lstsq(self, rhs):
        return self.factors.lstsq(rhs)

    def _weighted_lstsq_t(self, z):
        """Transpose of ``weighted_lstsq``: Q [R^-T z; 0]."""
        F = self.factors
        u = F.solve_rt(z[F.col_perm])
        return F.apply_q(np.concatenate([u, np.zeros(F.shape[0] - F.n)]))

    def apply(self, b, n_iter=None, c=None):
        """x = A_eps^+ b. With mu > 0 this is argmin ||A x - b||^2 +
        ||mu x - c||^2 (c = 0 by default)."""
        f, g = self._rhs(b, c)
        res = deferred_correction(self.weighted_lstsq, self.E, self.C, f, g,
                                  self.cfg.tau, self.cfg.max_iter, self.cfg.dc_tol,
                                  n_iter)
        self.n_applications += 1
        self.last = res
        return self.emb.x_of(res.x)

    def apply_adjoint(self, v, n_iter=2):
        """Transpose of the linear map ``apply(., n_iter)``.

        Returns the adjoint with respect to b, or the pair (b, c) for the
        Tikhonov variant.
        """
        v = np.asarray(v, dtype=float)
        tau = self.cfg.tau
        n = self.factors.n
        nE = self.E.shape[0]
        nC = self.C.shape[0]
        # forward recurrence, linear in (f, g):
        #   x0 = S [f; tau g], r0 = f - E x0, w0 = g - C x0, l0 = tau^2 w0
        #   dx = S [r; tau w + l / tau]; x += dx; r -= E dx; w -= C dx;
        #   l += tau^2 w
        # swept backwards with the adjoints (xb, rb, wb, lb)
        xb = np.zeros(n)
        xb[self.emb.x_positions()] = v[self.emb.x_index]
        rb = np.zeros(nE)
        wb = np.zeros(nC)
        lb = np.zeros(nC)
        for _ in range(n_iter):
            wb = wb + tau**2 * lb
            q = self._weighted_lstsq_t(xb - self.E.T @ rb - self.C.T @ wb)
            rb = rb + q[:nE]
            wb = wb + tau * q[nE:]
            lb = lb + q[nE:] / tau
        wb = wb + tau**2 * lb
        q = self._weighted_lstsq_t(xb - self.E.T @ rb - self.C.T @ wb)
        fb = rb + q[:nE]
        gb = wb + tau * q[nE:]
        self.n_applications += 1
        M, N = self.cm.shape
        if self.variant == "underdetermined":
            return self.emb.unlift_b(gb[:M])
        bb = self.emb.unlift_b(fb[:M])
        if self.variant == "tikhonov":
            cb = np.empty(N)
            cb[self.emb.x_index] = fb[M:]
            return bb, cb
        return bb


def prepare(cm, cfg=None, variant="overdetermined"):
    cfg = cfg or SolverConfig()
    if variant == "overdetermined" and cfg.mu > 0:
        variant = "tikhonov"
    return PreparedSystem(cm, cfg, variant)


def pseudoinverse_apply(prepared, b, n_iter=None):
    return prepared.apply(b, n_iter)


@dataclass
class SolveReport:
    x: np.ndarray
    n_iter: int
    history: list
    converged: bool
    residual: float              # ||A x - b|| / ||b||
    residual_exact: bool         # True when measured on the true operator
    M: int
    N: int
    K_r: int
    K_c: int
    T_cm: float
    T_qr: float
    T_sv: float
    T_total_solve: float
    levels: list = field(default_factory=list)   # (l, p_l, k_l)
    variant: str = ""

    def to_json(self, include_x=False):
        d = asdict(self)
        d["x"] = self.x.tolist() if include_x else None
        return json.dumps(d, indent=1)


def _time_single_apply(prepared, b):
    """Time one weighted solve (Q^T and back substitution), best of three."""
    f, g = prepared._rhs(b)
    rhs = np.concatenate([f, prepared.cfg.tau * g])
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        prepared.weighted_lstsq(rhs)
        best = min(best, time.perf_counter() - t0)
    return best


def _solve(kernel, targets, sources, b, cfg, variant, cm=None,
           true_operator=None, repeats=1):
    cfg = cfg or SolverConfig()
    if isinstance(kernel, str):
        kernel = KernelSpec.parse(kernel)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite values")
    if cm is None:
        # timings are the best of ``repeats`` runs
        for _ in range(repeats):
            c = compress(kernel, targets, sources, cfg.compression())
            if cm is None or c.timings["compress"] < cm.timings["compress"]:
                cm = c
    M, N = cm.shape
    if variant == "underdetermined" and M > N:
        raise ValueError("underdetermined solve needs M <= N")
    if variant == "overdetermined" and M < N:
        raise ValueError("overdetermined solve needs M >= N")
    if variant == "overdetermined" and cfg.mu > 0:
        variant = "tikhonov"
    ps = PreparedSystem(cm, cfg, variant)
    for _ in range(repeats - 1):
        ps.t_qr = min(ps.t_qr, PreparedSystem(cm, cfg, variant).t_qr)
    t0 = time.perf_counter()
    x = ps.apply(b)
    t_solve = time.perf_counter() - t0
    res = ps.last
    if not res.converged:
        warnings.warn(f"deferred correction stopped after {res.n_iter} steps "
                      f"with constraint residual {res.history[-1]:.2e}",
                      NotConvergedWarning, stacklevel=3)
    t_sv = _time_single_apply(ps, b)
    exact = targets is not None and M * N <= cfg.oracle_cap
    if true_operator is not None:
        Ax = true_operator(x)
        exact = True
    elif exact:
        Ax = apply_true(kernel, targets, sources, x)
    else:
        Ax = cm.matvec(x)
    bn = np.linalg.norm(b)
    resid = float(np.linalg.norm(Ax - b) / bn) if bn > 0 else float(np.linalg.norm(Ax))
    lv = cm.level_stats() if hasattr(cm, "level_stats") else []
    return SolveReport(x, res.n_iter, res.history, res.converged, resid, exact,
                       M, N, cm.K_r, cm.K_c, cm.timings.get("compress", 0.0),
                       ps.t_qr, t_sv, t_solve, lv, variant), ps


def solve_overdetermined(kernel, targets, sources, b, cfg=None, cm=None,
                         return_prepared=False):
    """Least-squares solve of K(targets, sources) x ~= b with M >= N
    (Tikhonov-regularized when cfg.mu > 0)."""
    rep, ps = _solve(kernel, targets, sources, b, cfg, "overdetermined", cm)
    return (rep, ps) if return_prepared else rep


def solve_underdetermined(kernel, targets, sources, b, cfg=None, cm=None,
                          return_prepared=False):
    """Minimum-norm solve of K(targets, sources) x = b with M <= N."""
    rep, ps = _solve(kernel, targets, sources, b, cfg, "underdetermined", cm)
    return (rep, ps) if return_prepared else rep


def solve_equality_lstsq(E, C, f, g, tau=DEFAULT_TAU, max_iter=8, tol=1e-12):
    """min ||E x - f|| subject to C x = g for explicit dense E and C, by
    deferred correction on the weighted matrix [E; tau C] (factorized as a
    one-block sparse QR)."""
    from .embedding import SparseBlockMatrix
    E = np.asarray(E, dtype=float)
    C = np.asarray(C, dtype=float)
    n = E.shape[1]
    if C.shape[1] != n:
        raise ValueError("E and C must have the same number of columns")
    A = SparseBlockMatrix([n], [("x",)])
    A.add_row(E.shape[0], {0: E}, "E")
    if C.shape[0]:
        A.add_row(C.shape[0], {0: tau * C}, "C")
    F = factorize(A)
    return deferred_correction(F.lstsq, E, C, f, g, tau, max_iter, tol)
