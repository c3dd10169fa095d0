import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbsls.geometry import (PointSet, circle, dump_points_csv, ellipse,
                            load_points_csv, make_geometry, sphere, unit_grid)
from hbsls.kernels import (KernelSpec, apply_true, dense_matrix, eval_block,
                           proxy_col_block, proxy_row_block)

RADIAL = ["laplace2d_log", "yukawa2d(3)", "thin_plate_spline", "multiquadric(2)",
          "inverse_multiquadric(0.5)", "polyharmonic(2)"]


def _pair(r):
    return (PointSet(np.array([[0.0, 0.0]])), PointSet(np.array([[r, 0.0]])))


def _entry(kernel, r):
    t, s = _pair(r)
    return eval_block(KernelSpec.parse(kernel), t, [0], s, [0])[0, 0]


def test_scalar_kernel_values():
    assert _entry("thin_plate_spline", 1.0) == 0.0
    assert _entry("laplace2d_log", 1.0) == 0.0
    p = PointSet(np.array([[0.3, 0.1]]))
    assert eval_block(KernelSpec.parse("multiquadric(2)"), p, [0], p, [0])[0, 0] == 2.0
    assert eval_block(KernelSpec.parse("inverse_multiquadric(4)"), p, [0], p, [0])[0, 0] == 0.25
    assert eval_block(KernelSpec.parse("thin_plate_spline"), p, [0], p, [0])[0, 0] == 0.0
    assert np.isclose(_entry("laplace2d_log", np.e), -1 / (2 * np.pi))


def test_kernel_parse_and_validation():
    k = KernelSpec.parse("multiquadric(2)")
    assert k.family == "multiquadric" and k.param == 2.0
    assert str(k) == "multiquadric(2)"
    with pytest.raises(ValueError):
        KernelSpec.parse("helmholtz2d(1)")
    with pytest.raises(ValueError):
        KernelSpec("multiquadric", -1.0)
    with pytest.raises(ValueError):
        KernelSpec("polyharmonic", 1.5)
    with pytest.raises(ValueError):
        KernelSpec("yukawa2d")


def test_singular_kernel_off_diagonal_coincidence_raises():
    t = PointSet(np.array([[0.0, 0.0], [1.0, 0.0]]))
    s = PointSet(np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        eval_block(KernelSpec.parse("laplace2d_log"), t, [0, 1], s, [0])
    # same set: the diagonal is dropped, not an error
    K = eval_block(KernelSpec.parse("laplace2d_log"), t, [0, 1], t, [0, 1])
    assert K[0, 0] == 0.0 and K[1, 1] == 0.0


def test_double_layer_gauss_identity_on_circle():
    pts = circle(10)
    K = eval_block(KernelSpec.parse("laplace2d_double_layer"), pts, np.arange(10),
                   pts, np.arange(10))
    assert np.allclose(K @ np.ones(10), -1.0, atol=1e-13)
    # without the curvature term the identity holds to O(1/N)
    bare = PointSet(pts.coords, pts.normals, pts.weights)
    K0 = eval_block(KernelSpec.parse("laplace2d_double_layer"), bare, np.arange(10),
                    bare, np.arange(10))
    assert np.allclose(K0 @ np.ones(10), -1.0, atol=0.1)


def test_double_layer_gauss_identity_on_ellipse():
    pts = ellipse(256)
    K = dense_matrix(KernelSpec.parse("laplace2d_double_layer"), pts, pts)
    assert np.max(np.abs(K @ np.ones(256) + 1.0)) < 1e-10


def test_double_layer_needs_normals():
    p = PointSet(np.random.default_rng(0).random((4, 2)))
    with pytest.raises(ValueError):
        eval_block(KernelSpec.parse("laplace2d_double_layer"), p, [0], p, [1])


@pytest.mark.parametrize("kernel", RADIAL)
def test_radial_symmetry(kernel):
    rng = np.random.default_rng(3)
    T = PointSet(rng.random((13, 2)))
    S = PointSet(rng.random((9, 2)) + 2.0)
    spec = KernelSpec.parse(kernel)
    A = eval_block(spec, T, np.arange(13), S, np.arange(9))
    B = eval_block(spec, S, np.arange(9), T, np.arange(13))
    assert np.array_equal(A, B.T)


@settings(max_examples=30, deadline=None)
@given(kernel=st.sampled_from(RADIAL + ["laplace2d_double_layer"]),
       seed=st.integers(0, 2**31 - 1),
       shift=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_translation_invariance(kernel, seed, shift):
    rng = np.random.default_rng(seed)
    spec = KernelSpec.parse(kernel)
    T = ellipse(12)
    S = PointSet(rng.random((7, 2)) * 0.3, *(circle(7).normals, circle(7).weights))
    s = np.asarray(shift)
    T2 = PointSet(T.coords + s, T.normals, T.weights, T.curvature)
    S2 = PointSet(S.coords + s, S.normals, S.weights)
    A = eval_block(spec, T, np.arange(12), S, np.arange(7))
    B = eval_block(spec, T2, np.arange(12), S2, np.arange(7))
    scale = max(1.0, np.max(np.abs(A)))
    assert np.max(np.abs(A - B)) <= 1e-13 * scale * (1 + np.linalg.norm(s)) * 10


def test_ellipse_parametrization():
    p = ellipse(8)
    assert len(p) == 8
    x, y = p.coords.T
    assert np.allclose(x**2 / 4 + y**2, 1.0)
    t = np.arctan2(y / 1.0, x / 2.0) % (2 * np.pi)
    assert np.allclose(np.diff(np.sort(t)), 2 * np.pi / 8)
    assert np.allclose(np.linalg.norm(p.normals, axis=1), 1.0, atol=1e-12)
    assert np.all(np.sum(p.normals * p.coords, axis=1) > 0)   # outward
    # trapezoidal weights integrate the perimeter (about 9.6884)
    assert abs(ellipse(400).weights.sum() - 9.688448220547675) < 1e-10


def test_grid_and_annulus():
    g = make_geometry("tps", (5, 16), rng=0)[1]
    assert len(g) == 16
    assert sorted(set(np.round(g.coords[:, 0], 12))) == [0.125, 0.375, 0.625, 0.875]
    assert np.all((g.coords > 0) & (g.coords < 1))
    T, S = make_geometry("annulus", 64, M=8, delta=1e-4)
    assert len(T) == 8 and len(S) == 64
    assert np.allclose(np.linalg.norm(S.coords, axis=1), 1.0)
    assert np.allclose(np.linalg.norm(T.coords, axis=1), 1.0001)
    assert len(make_geometry("annulus", 1024)[0]) == 128


def test_random_targets_are_seeded():
    a = make_geometry("tps", (50, 16), rng=7)[0].coords
    b = make_geometry("tps", (50, 16), rng=7)[0].coords
    c = make_geometry("tps", (50, 16), rng=8)[0].coords
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_geometry_errors():
    with pytest.raises(ValueError):
        make_geometry("torus", 10)
    with pytest.raises(ValueError):
        make_geometry("tps", (10, 15))
    with pytest.raises(ValueError):
        PointSet(np.zeros((3, 2)), normals=np.ones((3, 2)))
    with pytest.raises(ValueError):
        PointSet(np.array([[np.inf, 0.0]]))


def test_sphere_discretization():
    p = sphere(3)
    assert len(p) == 180
    # flat triangles under-cover the sphere; the gap closes with refinement
    gaps = [4 * np.pi - sphere(n).weights.sum() for n in (2, 3, 6)]
    assert 0 < gaps[2] < gaps[1] < gaps[0] and gaps[2] < 0.03 * 4 * np.pi
    assert np.all(np.sum(p.normals * p.coords, axis=1) > 0)
    T, S = make_geometry("sphere", 80)
    assert T is S and len(T) == 80


def test_points_csv_roundtrip(tmp_path):
    p = ellipse(16)
    path = tmp_path / "pts.csv"
    dump_points_csv(p, path)
    assert path.read_text().splitlines()[0] == "dim=2,normals,weights"
    q = load_points_csv(path)
    assert np.array_equal(p.coords, q.coords)
    assert np.array_equal(p.normals, q.normals)
    assert np.array_equal(p.weights, q.weights)


def test_apply_true_matches_dense():
    T, S = make_geometry("annulus", 300)
    spec = KernelSpec.parse("laplace2d_log")
    x = np.random.default_rng(0).standard_normal(300)
    assert np.allclose(apply_true(spec, T, S, x, chunk=7), dense_matrix(spec, T, S) @ x)


@pytest.mark.parametrize("kernel", ["laplace2d_log", "thin_plate_spline",
                                    "yukawa2d(2)", "laplace2d_double_layer"])
def test_proxy_captures_far_field(kernel):
    # far-field columns restricted to a box lie in the proxy column space
    spec = KernelSpec.parse(kernel)
    rng = np.random.default_rng(1)
    inner = PointSet(rng.random((20, 2)) * 0.2, *(circle(20).normals, circle(20).weights))
    far = circle(50, radius=2.0)
    c, rad = np.array([0.1, 0.1]), 0.3
    A = eval_block(spec, inner, np.arange(20), far, np.arange(50))
    P = proxy_row_block(spec, inner, np.arange(20), c, rad, 64)
    Q, _ = np.linalg.qr(P)
    assert np.linalg.norm(A - Q @ (Q.T @ A)) <= 1e-10 * np.linalg.norm(A)
    B = eval_block(spec, far, np.arange(50), inner, np.arange(20))
    Pc = proxy_col_block(spec, inner, np.arange(20), c, rad, 64)
    Qc, _ = np.linalg.qr(Pc.T)
    assert np.linalg.norm(B - (B @ Qc) @ Qc.T) <= 1e-10 * np.linalg.norm(B)
