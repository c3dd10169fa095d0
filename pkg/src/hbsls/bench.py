"""Experiments, complexity records and the scaling check."""

from dataclasses import dataclass, field, fields
import contextlib
import csv
import gc
import io
import time

import numpy as np

from .geometry import make_geometry, PointSet
from .kernels import KernelSpec, dense_matrix, apply_true
from .oracle import dense_lstsq
from .skeleton import compress
from .solver import SolverConfig, PreparedSystem, _solve
from .update import ModificationSpec, build_augmented, solve_augmented_gmres

EXPERIMENTS = ("laplace2d", "laplace3d", "tps_fit", "charge_fit", "tps_update")
SCHEMA = "hbsls-complexity 1"
SIZE_CAP = {"laplace3d": 2880}     # everything else is 2-D
SIZE_CAP_2D = 32768


@dataclass
class ExperimentSpec:
    experiment: str
    sizes: list
    eps: float | None = None
    mu: float = 0.1
    delta: float = 1e-4
    leaf_capacity: int = 64
    proxy: bool = True
    seed: int = 0
    oracle_cap: float = 1e7
    n_add: int = 50
    repeats: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {', '.join(EXPERIMENTS)}")
        self.sizes = [int(s) for s in self.sizes]
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("sizes must be positive integers")
        cap = SIZE_CAP.get(self.experiment, SIZE_CAP_2D)
        if max(self.sizes) > cap:
            raise ValueError(f"size {max(self.sizes)} exceeds the {self.experiment} cap of {cap}")
        if self.eps is None:
            self.eps = {"laplace2d": 1e-9, "charge_fit": 1e-9}.get(self.experiment, 1e-6)
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")

    def config(self, mu=0.0):
        return SolverConfig(eps=self.eps, mu=mu, leaf_capacity=self.leaf_capacity,
                            proxy=self.proxy, oracle_cap=self.oracle_cap)


@dataclass
class ComplexityRecord:
    M: int
    N: int
    K_r: int
    K_c: int
    T_cm: float
    T_qr: float
    T_sv: float
    n_iter: int
    E: float | None
    R: float
    p_levels: list = field(default_factory=list)
    k_levels: list = field(default_factory=list)
    converged: bool = True
    R_exact: bool = True
    extra: dict = field(default_factory=dict)


COLUMNS = ["M", "N", "K_r", "K_c", "T_cm", "T_qr", "T_sv", "n_iter", "E", "R",
           "p_l", "k_l"]


def tps_target(x):
    return np.sin(4 * np.pi * x[:, 0]) + np.cos(2 * np.pi * x[:, 1]) * np.sin(
        3 * np.pi * x[:, 0] * x[:, 1])


def _record(rep, E):
    lv = rep.levels
    return ComplexityRecord(rep.M, rep.N, rep.K_r, rep.K_c, rep.T_cm, rep.T_qr,
                            rep.T_sv, rep.n_iter, E, rep.residual,
                            [p for _, p, _ in lv], [k for _, _, k in lv],
                            rep.converged, rep.residual_exact)


def _relerr(x, ref):
    return float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


def run_single(spec, size, rng):
    """One experiment instance; returns (ComplexityRecord, details)."""
    name = spec.experiment
    cap = spec.oracle_cap
    if name in ("laplace2d", "laplace3d"):
        case = "ellipse" if name == "laplace2d" else "sphere"
        kern = KernelSpec("laplace2d_double_layer" if name == "laplace2d"
                          else "laplace3d_double_layer")
        T, S = make_geometry(case, size)
        src = np.array([3.0, 2.0] if name == "laplace2d" else [2.0, 1.0, 0.5])
        r = np.linalg.norm(T.coords - src, axis=1)
        b = -np.log(r) / (2 * np.pi) if name == "laplace2d" else 1 / (4 * np.pi * r)
        cfg = spec.config()
        rep, ps = _solve(kern, T, S, b, cfg, "overdetermined",
                          repeats=spec.repeats)
        E = None
        if size * size <= cap:
            E = _relerr(rep.x, dense_lstsq(dense_matrix(kern, T, S), b))
        return _record(rep, E), {"prepared": ps, "report": rep, "kernel": kern, "targets": T, "sources": S, "b": b}
    if name in ("tps_fit", "tps_update"):
        M = size
        N = M // 4
        kern = KernelSpec("thin_plate_spline")
        T, S = make_geometry("tps", (M, N), rng=rng)
        b = tps_target(T.coords)
        cfg = spec.config(spec.mu)
        rep, ps = _solve(kern, T, S, b, cfg, "overdetermined",
                          repeats=spec.repeats)
        if name == "tps_fit":
            E = None
            if M * N <= cap:
                A = dense_matrix(kern, T, S)
                Ah = np.vstack([A, spec.mu * np.eye(N)])
                E = _relerr(rep.x, dense_lstsq(Ah, np.concatenate([b, np.zeros(N)])))
            return _record(rep, E), {"prepared": ps, "report": rep, "kernel": kern, "targets": T, "sources": S, "b": b}
        return _update_record(spec, kern, T, S, b, rep, ps, rng)
    if name == "charge_fit":
        N = size
        kern = KernelSpec("laplace2d_log")
        T, S = make_geometry("annulus", N, delta=spec.delta)
        q = rng.standard_normal(N)
        b = apply_true(kern, T, S, q)
        cfg = spec.config()
        rep, ps = _solve(kern, T, S, b, cfg, "underdetermined",
                          repeats=spec.repeats)
        E = None
        if len(T) * N <= cap:
            E = _relerr(rep.x, dense_lstsq(dense_matrix(kern, T, S), b))
        return _record(rep, E), {"prepared": ps, "report": rep, "kernel": kern, "targets": T, "sources": S, "b": b}
    raise ValueError(name)


def _update_record(spec, kern, T, S, b, rep, ps, rng):
    """Add spec.n_add random rows to a prepared TPS fit."""
    newT = PointSet(rng.random((spec.n_add, 2)))
    bnew = tps_target(newT.coords)
    mod = ModificationSpec.from_points(kern, T, S, add_targets=newT, add_values=bnew)
    aug = build_augmented(ps, b, mod)
    upd = solve_augmented_gmres(aug)
    E = None
    N = ps.shape[1]
    if ps.shape[0] * N <= spec.oracle_cap:
        # the enlarged problem solved directly from the dense A_eps
        Ad = np.vstack([ps.cm.to_dense(), mod.add_rows, spec.mu * np.eye(N)])
        xref = dense_lstsq(Ad, np.concatenate([b, bnew, np.zeros(N)]))
        E = _relerr(upd.x, xref)
    resid_new = float(np.linalg.norm(mod.add_rows @ upd.x - bnew) / np.linalg.norm(bnew))
    r = _record(rep, E)
    r.n_iter = upd.gmres_iterations
    r.R = resid_new
    r.converged = rep.converged and upd.converged
    r.extra = {"pinv_applications": upd.pinv_applications,
               "setup_applications": upd.setup_applications, "update_time": upd.time}
    return r, {"prepared": ps, "report": rep, "update": upd, "mod": mod,
               "kernel": kern, "targets": T, "sources": S, "b": b, "new_targets": newT}


@contextlib.contextmanager
def _no_gc():
    """Collect, then keep the cyclic collector out of the timed run (as
    timeit does); a large live heap otherwise inflates the timings."""
    gc.collect()
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def run_experiment(spec):
    """Run every size; returns the list of ComplexityRecords.

    A run that raises is recorded as non-converged with the error message in
    ``extra`` and the sweep moves on.
    """
    rng = np.random.default_rng(spec.seed)
    out = []
    for s in spec.sizes:
        try:
            with _no_gc():
                out.append(run_single(spec, s, rng)[0])
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            nan = float("nan")
            out.append(ComplexityRecord(0, int(s), 0, 0, nan, nan, nan, 0, None,
                                        nan, converged=False,
                                        extra={"error": f"{type(exc).__name__}: {exc}"}))
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def records_to_csv(records, mask_timings=False):
    buf = io.StringIO()
    buf.write(f"# {SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        t = ["", "", ""] if mask_timings else [_fmt(r.T_cm), _fmt(r.T_qr), _fmt(r.T_sv)]
        w.writerow([r.M, r.N, r.K_r, r.K_c] + t +
                   [r.n_iter, _fmt(r.E), _fmt(r.R),
                    ";".join(map(str, r.p_levels)),
                    ";".join(f"{k:.2f}" for k in r.k_levels)])
    return buf.getvalue()


def read_csv(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def loglog_slope(n, t):
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def scaling_check(records, bound):
    """Fitted log-log slopes of T_cm, T_qr, T_sv against N, each compared with
    ``bound`` (1.3 for boundary data, 1.2 for separated sets)."""
    if len(records) < 3:
        raise ValueError("a slope fit needs at least three runs")
    n = [r.N for r in records]
    out = {}
    for key in ("T_cm", "T_qr", "T_sv"):
        s = loglog_slope(n, [getattr(r, key) for r in records])
        out[key] = (s, s <= bound)
    return out
