"""Kernel families, block evaluation and proxy surfaces."""

from dataclasses import dataclass
import re

import numpy as np
from scipy.special import k0, k1

FAMILIES = {
    "laplace2d_log": 2,
    "laplace3d": 3,
    "yukawa2d": 2,
    "yukawa3d": 3,
    "polyharmonic": None,
    "thin_plate_spline": 2,
    "multiquadric": None,
    "inverse_multiquadric": None,
    "laplace2d_double_layer": 2,
    "laplace3d_double_layer": 3,
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its parameter (k for Yukawa, c for the
    multiquadrics, n for polyharmonic)."""

    family: str
    param: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        needs = {"yukawa2d", "yukawa3d", "polyharmonic", "multiquadric",
                 "inverse_multiquadric"}
        if self.family in needs:
            if self.param is None or not self.param > 0:
                raise ValueError(f"{self.family} needs a positive parameter")
            if self.family == "polyharmonic" and self.param != int(self.param):
                raise ValueError("polyharmonic order must be an integer")

    @classmethod
    def parse(cls, text):
        m = re.fullmatch(r"\s*([a-z0-9_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse kernel {text!r}")
        p = float(m.group(2)) if m.group(2) else None
        return cls(m.group(1), p)

    def __str__(self):
        if self.param is None:
            return self.family
        return f"{self.family}({self.param:g})"

    @property
    def double_layer(self):
        return self.family.endswith("double_layer")

    def check_dim(self, d):
        want = FAMILIES[self.family]
        if want is not None and want != d:
            raise ValueError(f"{self.family} needs {want}-D points, got {d}-D")

    @property
    def has_proxy(self):
        if self.family in ("multiquadric", "inverse_multiquadric"):
            return False
        if self.family == "polyharmonic":
            return self.param == 1
        return True


def _diff(tx, sx):
    d = tx[:, None, :] - sx[None, :, :]
    return d, np.sqrt(np.sum(d * d, axis=-1))


def _radial(spec, r, dim):
    """phi(r) with the removable r=0 values set to 0 (or left for the caller
    when singular)."""
    f = spec.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if f == "laplace2d_log":
            v = -np.log(r) / (2 * np.pi)
        elif f == "laplace3d":
            v = 1.0 / (4 * np.pi * r)
        elif f == "yukawa2d":
            v = k0(spec.param * r) / (2 * np.pi)
        elif f == "yukawa3d":
            v = np.exp(-spec.param * r) / (4 * np.pi * r)
        elif f == "thin_plate_spline" or (f == "polyharmonic" and dim == 2):
            n = 1 if f == "thin_plate_spline" else int(spec.param)
            v = np.where(r > 0, r ** (2 * n) * np.log(r), 0.0)
        elif f == "polyharmonic":
            v = r ** (2 * int(spec.param) - 1)
        elif f == "multiquadric":
            v = np.sqrt(r * r + spec.param**2)
        elif f == "inverse_multiquadric":
            v = 1.0 / np.sqrt(r * r + spec.param**2)
        else:
            raise ValueError(f)
    return v


def _radial_deriv(spec, r, dim):
    """d phi / d r for the families used on proxy surfaces."""
    f = spec.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if f in ("laplace2d_log", "laplace2d_double_layer"):
            return -1.0 / (2 * np.pi * r)
        if f in ("laplace3d", "laplace3d_double_layer"):
            return -1.0 / (4 * np.pi * r * r)
        if f == "yukawa2d":
            return -spec.param * k1(spec.param * r) / (2 * np.pi)
        if f == "yukawa3d":
            k = spec.param
            return -np.exp(-k * r) * (k * r + 1) / (4 * np.pi * r * r)
        if f in ("thin_plate_spline", "polyharmonic") and dim == 2:
            return 2 * r * np.log(r) + r
        if f == "polyharmonic":
            return np.ones_like(r)
    raise ValueError(f"no radial derivative for {f}")


def eval_block(spec, targets, tidx, sources, sidx):
    """Dense block K(targets[tidx], sources[sidx]).

    Double-layer families carry the source normal and weight. When
    ``targets is sources`` the 2-D double layer gets -1/2 on matching indices
    plus the smooth self limit -kappa w / (4 pi) when curvature is known;
    the 3-D double layer gets -1/2 and a zero self term.
    """
    tidx = np.asarray(tidx, dtype=int)
    sidx = np.asarray(sidx, dtype=int)
    spec.check_dim(targets.dim)
    spec.check_dim(sources.dim)
    if tidx.size == 0 or sidx.size == 0:
        return np.zeros((tidx.size, sidx.size))
    tx = targets.coords[tidx]
    sx = sources.coords[sidx]
    d, r = _diff(tx, sx)
    same = None
    if targets is sources:
        same = tidx[:, None] == sidx[None, :]
    f = spec.family
    if spec.double_layer:
        if sources.normals is None or sources.weights is None:
            raise ValueError("double-layer kernels need source normals and weights")
        nu = sources.normals[sidx]
        w = sources.weights[sidx]
        dot = np.einsum("ijk,jk->ij", d, nu)
        with np.errstate(divide="ignore", invalid="ignore"):
            if f == "laplace2d_double_layer":
                K = dot / (2 * np.pi * r * r) * w
            else:
                K = dot / (4 * np.pi * r**3) * w
        coincident = r == 0.0
        if np.any(coincident):
            if same is None or np.any(coincident & ~same):
                raise ValueError("coincident target and source points")
            K[coincident] = 0.0
        if same is not None:
            ii, jj = np.nonzero(same)
            if f == "laplace2d_double_layer" and sources.curvature is not None:
                kap = sources.curvature[sidx[jj]]
                K[ii, jj] = -kap * w[jj] / (4 * np.pi)
            K[ii, jj] -= 0.5
        return K
    K = _radial(spec, r, targets.dim)
    bad = ~np.isfinite(K)
    if np.any(bad):
        if same is not None and np.all(same[bad]):
            K[bad] = 0.0
        else:
            raise ValueError("kernel singular at coincident target/source points")
    return K


def dense_matrix(spec, targets, sources, chunk=2048):
    """The full M x N kernel matrix, evaluated in row chunks."""
    M, N = len(targets), len(sources)
    A = np.empty((M, N))
    cols = np.arange(N)
    for s in range(0, M, chunk):
        rows = np.arange(s, min(M, s + chunk))
        A[s:s + rows.size] = eval_block(spec, targets, rows, sources, cols)
    return A


def apply_true(spec, targets, sources, x, chunk=512):
    """y = K x by chunked direct summation, without storing K."""
    x = np.asarray(x, dtype=float)
    y = np.empty(len(targets))
    cols = np.arange(len(sources))
    for s in range(0, len(targets), chunk):
        rows = np.arange(s, min(len(targets), s + chunk))
        y[rows] = eval_block(spec, targets, rows, sources, cols) @ x
    return y


# ---------------------------------------------------------------- proxies

def proxy_points(center, radius, dim, n_proxy):
    """Quasi-uniform points on the sphere of given radius with outward
    normals (equispaced on a circle in 2-D, Fibonacci lattice in 3-D)."""
    if dim == 2:
        t = 2 * np.pi * (np.arange(n_proxy) + 0.5) / n_proxy
        u = np.column_stack([np.cos(t), np.sin(t)])
    elif dim == 3:
        i = np.arange(n_proxy) + 0.5
        z = 1 - 2 * i / n_proxy
        phi = np.pi * (1 + 5 ** 0.5) * i
        s = np.sqrt(1 - z * z)
        u = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    else:
        raise ValueError("proxy surfaces need d = 2 or 3")
    return center + radius * u, u


def _proxy_basis(spec, x, p, pn, dim):
    """Columns spanning the field x -> sum_p c_p g(x, p) generated outside
    the proxy sphere: the Green's function and its normal derivative (plus
    the log pair for the 2-D biharmonic kernel)."""
    d, r = _diff(x, p)
    # directional factor for d/d n_p of phi(|x - p|)
    cos = -np.einsum("ijk,jk->ij", d, pn) / r
    f = spec.family
    if f in ("thin_plate_spline", "polyharmonic") and dim == 2:
        lg = KernelSpec("laplace2d_log")
        return [_radial(spec, r, dim), _radial_deriv(spec, r, dim) * cos,
                _radial(lg, r, dim), _radial_deriv(lg, r, dim) * cos]
    if f == "polyharmonic":
        lg = KernelSpec("laplace3d")
        return [r, cos, _radial(lg, r, dim), _radial_deriv(lg, r, dim) * cos]
    base = {"laplace2d_double_layer": KernelSpec("laplace2d_log"),
            "laplace3d_double_layer": KernelSpec("laplace3d")}.get(f, spec)
    return [_radial(base, r, dim), _radial_deriv(base, r, dim) * cos]


def proxy_row_block(spec, targets, tidx, center, radius, n_proxy):
    """Matrix whose column space contains every far-field column restricted
    to the rows targets[tidx]."""
    x = targets.coords[np.asarray(tidx, dtype=int)]
    p, pn = proxy_points(center, radius, targets.dim, n_proxy)
    return np.hstack(_proxy_basis(spec, x, p, pn, targets.dim))


def proxy_col_block(spec, sources, sidx, center, radius, n_proxy):
    """Matrix whose row space contains every far-field row restricted to the
    columns sources[sidx]."""
    sidx = np.asarray(sidx, dtype=int)
    p, pn = proxy_points(center, radius, sources.dim, n_proxy)
    if spec.double_layer:
        # the kernel seen from proxy targets; its row space is what matters
        pts = PointSetLike(p)
        return eval_block(spec, pts, np.arange(len(p)), sources, sidx)
    y = sources.coords[sidx]
    return np.hstack(_proxy_basis(spec, y, p, pn, sources.dim)).T


class PointSetLike:
    """Minimal stand-in for a target set of bare coordinates."""

    def __init__(self, coords):
        self.coords = coords

    @property
    def dim(self):
        return self.coords.shape[1]

    def __len__(self):
        return len(self.coords)
