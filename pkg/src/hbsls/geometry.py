"""Point sets and the geometries used in the experiments."""

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class PointSet:
    """Points in R^d with optional unit normals, quadrature weights and
    signed curvature (2-D boundaries only)."""

    coords: np.ndarray
    normals: np.ndarray | None = None
    weights: np.ndarray | None = None
    curvature: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.ascontiguousarray(np.asarray(self.coords, dtype=float))
        if self.coords.ndim != 2 or self.coords.shape[1] not in (1, 2, 3):
            raise ValueError("coords must be an (n, d) array with d in 1..3")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain non-finite values")
        n, d = self.coords.shape
        if self.normals is not None:
            nr = np.asarray(self.normals, dtype=float)
            if nr.shape != (n, d):
                raise ValueError("normals must match coords in shape")
            lens = np.linalg.norm(nr, axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-8):
                raise ValueError("normals must have unit length")
            self.normals = nr
        for name in ("weights", "curvature"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if v.shape != (n,):
                    raise ValueError(f"{name} must have one entry per point")
                if not np.all(np.isfinite(v)):
                    raise ValueError(f"{name} contain non-finite values")
                setattr(self, name, v)
        if self.weights is not None and np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self):
        return self.coords.shape[0]

    @property
    def dim(self):
        return self.coords.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        pick = lambda v: None if v is None else v[idx]
        return PointSet(self.coords[idx], pick(self.normals),
                        pick(self.weights), pick(self.curvature))


def ellipse(n, a=2.0, b=1.0, rng=None):
    """Equispaced-in-angle nodes on an ellipse with outward normals and
    trapezoidal weights."""
    t = 2 * np.pi * np.arange(n) / n
    x = np.column_stack([a * np.cos(t), b * np.sin(t)])
    dx = np.column_stack([-a * np.sin(t), b * np.cos(t)])
    ddx = np.column_stack([-a * np.cos(t), -b * np.sin(t)])
    speed = np.linalg.norm(dx, axis=1)
    nrm = np.column_stack([dx[:, 1], -dx[:, 0]]) / speed[:, None]
    curv = (dx[:, 0] * ddx[:, 1] - dx[:, 1] * ddx[:, 0]) / speed**3
    return PointSet(x, nrm, speed * 2 * np.pi / n, curv)


def circle(n, radius=1.0):
    t = 2 * np.pi * np.arange(n) / n
    x = radius * np.column_stack([np.cos(t), np.sin(t)])
    return PointSet(x, x / radius, np.full(n, 2 * np.pi * radius / n),
                    np.full(n, 1.0 / radius))


def unit_grid(n_side, dim=2):
    """n_side^dim cell-centred points in [0, 1]^dim."""
    g = (np.arange(n_side) + 0.5) / n_side
    mesh = np.meshgrid(*([g] * dim), indexing="ij")
    return PointSet(np.column_stack([m.ravel() for m in mesh]))


def random_unit_square(n, rng):
    return PointSet(rng.random((n, 2)))


def _icosahedron():
    p = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
                  [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
                  [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], float)
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
         (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
         (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
         (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    return v / np.linalg.norm(v, axis=1)[:, None], np.array(f)


def sphere(n_sub):
    """Flat-triangle discretization of the unit sphere: each icosahedron face
    split into n_sub^2 triangles whose vertices are projected to the sphere.
    One collocation point per triangle (centroid), weight = triangle area."""
    v, faces = _icosahedron()
    tris = []
    for a, b, c in faces:
        A, B, C = v[a], v[b], v[c]
        P = {}
        for i in range(n_sub + 1):
            for j in range(n_sub + 1 - i):
                q = A + (B - A) * i / n_sub + (C - A) * j / n_sub
                P[i, j] = q / np.linalg.norm(q)
        for i in range(n_sub):
            for j in range(n_sub - i):
                tris.append((P[i, j], P[i + 1, j], P[i, j + 1]))
                if j < n_sub - i - 1:
                    tris.append((P[i + 1, j], P[i + 1, j + 1], P[i, j + 1]))
    T = np.array(tris)
    cen = T.mean(axis=1)
    cr = np.cross(T[:, 1] - T[:, 0], T[:, 2] - T[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    nrm = cr / (2 * area[:, None])
    nrm *= np.sign(np.sum(nrm * cen, axis=1))[:, None]
    return PointSet(cen, nrm, area)


def make_geometry(case, size, rng=None, **opts):
    """Return ``(targets, sources)`` for a named experiment geometry.

    ellipse  -- N boundary nodes, targets is sources
    sphere   -- size = N = 20 n^2 triangles, targets is sources
    tps      -- size = (M, N): M random targets in [0,1]^2, N grid centres
    annulus  -- size = N sources on the unit circle, M = N/8 targets on
                radius 1 + delta
    """
    rng = np.random.default_rng(rng)
    if case == "ellipse":
        pts = ellipse(int(size))
        return pts, pts
    if case == "sphere":
        n_sub = int(round((int(size) / 20) ** 0.5))
        if 20 * n_sub**2 != int(size):
            raise ValueError("sphere size must be 20 n^2")
        pts = sphere(n_sub)
        return pts, pts
    if case == "tps":
        M, N = size
        side = int(round(N ** 0.5))
        if side * side != N:
            raise ValueError("TPS centre count must be a perfect square")
        return random_unit_square(M, rng), unit_grid(side)
    if case == "annulus":
        N = int(size)
        delta = opts.get("delta", 1e-4)
        M = opts.get("M", N // 8)
        return circle(M, 1.0 + delta), circle(N)
    raise ValueError(f"unknown geometry {case!r}")


def dump_points_csv(points, path):
    fields = ["dim=%d" % points.dim]
    if points.normals is not None:
        fields.append("normals")
    if points.weights is not None:
        fields.append("weights")
    cols = [points.coords]
    if points.normals is not None:
        cols.append(points.normals)
    if points.weights is not None:
        cols.append(points.weights[:, None])
    np.savetxt(path, np.hstack(cols), delimiter=",", fmt="%.17g",
               header=",".join(fields), comments="")


def load_points_csv(path):
    with open(path) as fh:
        head = fh.readline().strip().split(",")
    if not head or not head[0].startswith("dim="):
        raise ValueError("point CSV must start with a dim= header")
    d = int(head[0][4:])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    want = d + d * ("normals" in head) + ("weights" in head)
    if data.shape[1] != want:
        raise ValueError(f"expected {want} columns, found {data.shape[1]}")
    nrm = data[:, d:2 * d] if "normals" in head else None
    w = data[:, -1] if "weights" in head else None
    return PointSet(data[:, :d], nrm, w)
