import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbsls.geometry import PointSet, circle, ellipse, make_geometry, unit_grid
from hbsls.tree import IndexTree, build_tree, smaller_side_depth

EMPTY2 = np.zeros((0, 2))


def _check_nesting(tree):
    for nd in tree.nodes:
        if nd.is_leaf:
            continue
        kids = [tree.nodes[c] for c in nd.children]
        assert np.array_equal(np.sort(np.concatenate([k.rows for k in kids])),
                              np.sort(nd.rows))
        assert np.array_equal(np.sort(np.concatenate([k.cols for k in kids])),
                              np.sort(nd.cols))
        for k in kids:
            assert k.parent == nd.id and k.depth == nd.depth + 1
            assert k.rows.size + k.cols.size > 0


def test_small_set_is_single_leaf():
    pts = np.random.default_rng(0).random((4, 2))
    t = build_tree(pts, EMPTY2, capacity=8)
    assert t.depth == 0 and len(t) == 1


def test_grid_8x8():
    # combined count per box: 64 points on one side only, capacity 4 stops at
    # 16 boxes of 4 points
    g = unit_grid(8).coords
    t = build_tree(g, EMPTY2, capacity=4)
    assert t.depth == 2
    blocks = t.level_blocks(2)
    assert len(blocks) == 16
    assert all(b.rows.size == 4 for b in blocks)
    # the same grid as both targets and sources counts every point twice
    t2 = build_tree(g, g, capacity=4)
    assert t2.depth == 3 and len(t2.level_blocks(3)) == 64


def test_level_zero_is_everything():
    T, S = make_geometry("annulus", 256)
    t = build_tree(T, S, capacity=16)
    (root,) = t.level_blocks(0)
    assert root.rows.size == len(T) and root.cols.size == len(S)


def test_leaf_capacity_counts_rows_and_columns():
    p = ellipse(500)
    t = build_tree(p, p, capacity=40)
    for leaf in t.leaves():
        assert leaf.rows.size + leaf.cols.size <= 40
    assert t.overfull == []


def test_depth_cap_records_overfull_leaves():
    pts = np.zeros((20, 2))
    pts[10:] = 1.0
    t = build_tree(pts, EMPTY2, capacity=4, depth_limit=3)
    # coincident clusters split until the cap and stay overfull there
    assert t.depth == 3
    assert len(t.overfull) == 2
    assert all(t.nodes[i].rows.size == 10 and t.nodes[i].depth == 3 for i in t.overfull)


def test_annulus_containment():
    T, S = make_geometry("annulus", 512, delta=0.3)
    t = build_tree(T, S, capacity=16)
    for nd in t.nodes:
        lo, hi = nd.center - nd.half, nd.center + nd.half
        for pts, idx in ((T.coords, nd.rows), (S.coords, nd.cols)):
            assert np.all((pts[idx] >= lo - 1e-12) & (pts[idx] <= hi + 1e-12))
            inside = np.all((pts > lo) & (pts < hi), axis=1)
            assert set(np.nonzero(inside)[0]) <= set(idx)


def test_lower_child_on_bisection_plane():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [0.5, 0.0], [0.0, 0.5]])
    t = build_tree(pts, EMPTY2, capacity=1)
    first = t.nodes[t.root.children[0]]
    assert 2 in first.rows and 3 in first.rows and 4 in first.rows


def test_errors():
    with pytest.raises(ValueError):
        build_tree(EMPTY2, EMPTY2)
    with pytest.raises(ValueError):
        build_tree(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        build_tree(np.zeros((3, 2)), EMPTY2, capacity=0)


def test_serialization_is_deterministic_and_roundtrips():
    T, S = make_geometry("tps", (300, 64), rng=5)
    a = build_tree(T, S, capacity=20).dumps()
    b = build_tree(T, S, capacity=20).dumps()
    assert a == b
    t = IndexTree.loads(a)
    assert t.dumps() == a
    with pytest.raises(ValueError):
        IndexTree.loads("garbage 2\n")


def test_smaller_side_depth():
    T, S = make_geometry("annulus", 1024)
    assert smaller_side_depth(T, S, 16) <= build_tree(T, S, 16).depth


@settings(max_examples=40, deadline=None)
@given(m=st.integers(0, 300), n=st.integers(1, 300), cap=st.integers(1, 64),
       seed=st.integers(0, 2**31 - 1), dim=st.sampled_from([2, 3]))
def test_partition_and_refinement_law(m, n, cap, seed, dim):
    rng = np.random.default_rng(seed)
    T = rng.random((m, dim)) ** 2
    S = rng.random((n, dim))
    t = build_tree(T, S, capacity=cap)
    t.check_partition()
    _check_nesting(t)
    p_prev = 1
    for l in range(t.depth + 1):
        blocks = t.level_blocks(l)
        assert np.array_equal(np.sort(np.concatenate([b.rows for b in blocks])),
                              np.arange(m))
        assert np.array_equal(np.sort(np.concatenate([b.cols for b in blocks])),
                              np.arange(n))
        assert len(blocks) <= 2**dim * p_prev
        p_prev = len(blocks)
    for leaf in t.leaves():
        assert leaf.rows.size + leaf.cols.size <= cap or leaf.id in t.overfull
