import numpy as np
import pytest

from hbsls.oracle import dense_equality_lstsq, dense_lstsq, estimate_condition

TAU = 1e8


def test_identity_and_mean():
    b = np.array([3.0, -1.0, 2.0])
    assert np.allclose(dense_lstsq(np.eye(3), b), b)
    assert np.isclose(dense_lstsq(np.ones((3, 1)), b)[0], b.mean())


def test_against_svd_pseudoinverse():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = int(rng.integers(2, 101))
        n = int(rng.integers(1, 41))
        A = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x = dense_lstsq(A, b)
        ref = np.linalg.pinv(A) @ b
        assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)
        if m >= n:
            g = A.T @ (A @ x - b)
            assert np.linalg.norm(g) <= 1e-10 * np.linalg.norm(A, 2) * np.linalg.norm(b)
        else:
            assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_random_20x7():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 7))
    b = rng.standard_normal(20)
    assert np.allclose(dense_lstsq(A, b), np.linalg.pinv(A) @ b, rtol=1e-10, atol=0)


def test_rank_deficiency_is_an_error():
    A = np.ones((5, 2))
    with pytest.raises(np.linalg.LinAlgError):
        dense_lstsq(A, np.ones(5))
    with pytest.raises(np.linalg.LinAlgError):
        dense_lstsq(A.T, np.ones(2))


def test_equality_constrained():
    rng = np.random.default_rng(2)
    E = rng.standard_normal((12, 6))
    f = rng.standard_normal(12)
    assert np.allclose(dense_equality_lstsq(E, np.zeros((0, 6)), f, np.zeros(0)),
                       dense_lstsq(E, f))
    g = rng.standard_normal(6)
    assert np.allclose(dense_equality_lstsq(E, np.eye(6), f, g), g, rtol=1e-12)
    C = rng.standard_normal((2, 6))
    g = rng.standard_normal(2)
    x = dense_equality_lstsq(E, C, f, g)
    assert np.linalg.norm(C @ x - g) <= 1e-12 * np.linalg.norm(g)
    # a heavily weighted unconstrained problem lands on the same answer
    xw = dense_lstsq(np.vstack([E, TAU * C]), np.concatenate([f, TAU * g]))
    assert np.linalg.norm(x - xw) <= 1e-6 * np.linalg.norm(x)


def test_equality_rank_violations():
    rng = np.random.default_rng(3)
    E = rng.standard_normal((8, 4))
    C = np.vstack([np.ones(4), np.ones(4)])
    with pytest.raises(np.linalg.LinAlgError):
        dense_equality_lstsq(E, C, np.zeros(8), np.zeros(2))
    with pytest.raises(np.linalg.LinAlgError):
        dense_equality_lstsq(E, rng.standard_normal((5, 4)), np.zeros(8), np.zeros(5))


def test_condition_examples():
    assert estimate_condition(np.eye(4)) == 1.0
    assert np.isclose(estimate_condition(np.diag([1.0, 1e-6])), 1e6)
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((30, 30)))
    assert abs(estimate_condition(Q) - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        estimate_condition(np.zeros((10, 10)), cap=50)
