import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damvol import forest as rf
from damvol.forest import Leaf, RfParams, Split, best_split, fit_forest, fit_tree, predict_forest, predict_tree

from oracles import brute_best_split, brute_tree, random_tree_instance, same_tree, tree_as_tuple


def test_best_split_oracle():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    thr, red = best_split(x, y, 1)
    f, thr_ref, red_ref = brute_best_split(x[:, None], y, 1)
    assert (thr, red) == (2.5, 100.0)
    assert thr_ref == thr and red_ref == pytest.approx(red)


def test_best_split_degenerate():
    assert best_split([3.0, 3.0, 3.0], [1.0, 2.0, 3.0]) is None
    assert best_split([1.0, 2.0, 3.0], [4.0, 4.0, 4.0]) is None
    assert best_split([1.0, 2.0, 3.0], [1.0, 5.0, 2.0], min_samples_leaf=2) is None


def test_best_split_respects_leaf_minimum():
    x = np.arange(6.0)
    y = np.array([100.0, 0, 0, 0, 0, 0])
    thr, _ = best_split(x, y, 2)
    assert thr == 1.5


def test_best_split_tie_lowest_threshold():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    f, thr_ref, _ = brute_best_split(x[:, None], y, 1)
    assert best_split(x, y, 1)[0] == thr_ref


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_best_split_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 25))
    x = rng.integers(0, 6, n).astype(float)
    y = rng.normal(size=n)
    leaf = int(rng.integers(1, 4))
    got = best_split(x, y, leaf)
    ref = brute_best_split(x[:, None], y, leaf)
    if ref is None:
        assert got is None
    else:
        assert got is not None
        assert got[1] == pytest.approx(ref[2], rel=1e-9, abs=1e-12)


def test_stump_matches_best_split():
    X = np.array([[1.0, 5.0], [2.0, 4.0], [3.0, 9.0], [4.0, 1.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    tree = fit_tree(X, y, RfParams(max_depth=1, min_samples_leaf=1, min_samples_split=2, mtry=2))
    per_feature = [best_split(X[:, j], y, 1) for j in range(2)]
    j = int(np.argmax([s[1] if s else -1 for s in per_feature]))
    assert isinstance(tree, Split)
    assert (tree.feature, tree.threshold) == (j, per_feature[j][0])
    assert tree.left == Leaf(0.0, 2) and tree.right == Leaf(10.0, 2)


def test_pure_and_single_row():
    assert fit_tree(np.ones((5, 2)), np.full(5, 3.0)) == Leaf(3.0, 5)
    assert fit_tree(np.array([[1.0]]), np.array([7.0])) == Leaf(7.0, 1)


def test_depth2_matches_exhaustive_search():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        X, y, leaf, depth = random_tree_instance(rng)
        p = X.shape[1]
        params = RfParams(max_depth=depth, min_samples_leaf=leaf, min_samples_split=2, mtry=p)
        got = tree_as_tuple(fit_tree(X, y, params))
        want = brute_tree(X, y, depth, leaf, 2)
        assert same_tree(got, want)


def _check_partition(node, X, idx):
    if isinstance(node, Leaf):
        assert node.count == idx.size
        return
    left = idx[X[idx, node.feature] <= node.threshold]
    right = idx[X[idx, node.feature] > node.threshold]
    assert left.size + right.size == idx.size and left.size and right.size
    _check_partition(node.left, X, left)
    _check_partition(node.right, X, right)


def test_partition_and_leaf_minimum():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 3))
    y = X[:, 0] ** 2 + rng.normal(size=80)
    params = RfParams(min_samples_leaf=3, mtry=3)
    tree = fit_tree(X, y, params)
    _check_partition(tree, X, np.arange(80))

    def leaves(n):
        return [n] if isinstance(n, Leaf) else leaves(n.left) + leaves(n.right)
    assert min(l.count for l in leaves(tree)) >= 3


def test_interpolates_training_rows():
    X = np.array([[1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0], [5.0, 0.0]])
    y = np.array([3.0, -1.0, 4.0, 1.0, 5.0])
    tree = fit_tree(X, y, RfParams(min_samples_leaf=1, min_samples_split=2, mtry=2))
    # a fully grown tree on unique rows puts every row in its own leaf
    np.testing.assert_array_equal(predict_tree(tree, X), y)
    f = fit_forest(X, y, RfParams(n_trees=1, bootstrap=False, mtry=2, min_samples_leaf=1,
                                  min_samples_split=2))
    for i in range(5):
        assert predict_forest(f, X[i:i + 1])[0] == y[i]


def test_single_tree_forest_equals_cart():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(60, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=60)
    params = RfParams(n_trees=1, bootstrap=False, mtry=3)
    f = fit_forest(X, y, params)
    tree = fit_tree(X, y, params)
    assert f.trees[0] == tree
    np.testing.assert_array_equal(predict_forest(f, X), predict_tree(tree, X))


def test_same_seed_identical():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(100, 4))
    y = X[:, 0] + rng.normal(size=100)
    p = RfParams(n_trees=10, seed=42)
    assert fit_forest(X, y, p).trees == fit_forest(X, y, p).trees
    assert fit_forest(X, y, p).trees != fit_forest(X, y, RfParams(n_trees=10, seed=43)).trees


def test_parallel_identical():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(100, 4))
    y = X[:, 0] + rng.normal(size=100)
    p = RfParams(n_trees=12, seed=7)
    base = fit_forest(X, y, p, n_jobs=1).trees
    assert fit_forest(X, y, p, n_jobs=4).trees == base


def test_forest_beats_stump():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 10, 300)
    y = x + rng.normal(0, 0.5, 300)
    X = x[:, None]
    full = fit_forest(X, y, RfParams(n_trees=200, seed=1))
    stump = fit_forest(X, y, RfParams(n_trees=200, seed=1, max_depth=1))
    err = lambda f: np.sqrt(np.mean((y - predict_forest(f, X)) ** 2))
    assert err(full) < err(stump)


def test_constant_leaves_forest():
    f = rf.Forest([Leaf(2.5, 3)] * 4, RfParams(n_trees=4), 2)
    assert np.all(predict_forest(f, np.zeros((6, 2))) == 2.5)


def test_width_mismatch():
    f = fit_forest(np.arange(20.0).reshape(10, 2), np.arange(10.0), RfParams(n_trees=2))
    with pytest.raises(ValueError, match="columns"):
        predict_forest(f, np.zeros((3, 3)))


def test_batch_vs_rows():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(50, 2))
    y = rng.normal(size=50)
    f = fit_forest(X, y, RfParams(n_trees=20, seed=3))
    batch = predict_forest(f, X)
    rows = np.array([predict_forest(f, X[i:i + 1])[0] for i in range(50)])
    np.testing.assert_array_equal(batch, rows)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_range_bounded(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    y = rng.normal(size=40) * 100
    f = fit_forest(X, y, RfParams(n_trees=8, seed=seed))
    pred = predict_forest(f, rng.normal(size=(30, 2)) * 5)
    tol = 1e-12 * np.abs(y).max()
    assert pred.min() >= y.min() - tol and pred.max() <= y.max() + tol


def test_constant_columns_excluded_from_pool():
    rng = np.random.default_rng(14)
    x = rng.uniform(0, 10, 120)
    y = np.sin(x) + rng.normal(0, 0.1, 120)
    X1 = np.column_stack([x, x > 5])
    X2 = np.column_stack([X1, np.full(120, 999.38), np.full(120, 27.0)])
    p = RfParams(n_trees=15, seed=2)
    f1, f2 = fit_forest(X1, y, p), fit_forest(X2, y, p)
    assert f2.feature_pool == (0, 1)
    assert f1.trees == f2.trees


def test_mtry_bounds():
    with pytest.raises(ValueError):
        fit_forest(np.zeros((5, 2)), np.zeros(5), RfParams(mtry=3))
    with pytest.raises(ValueError):
        RfParams(n_trees=0)


def test_json_roundtrip():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(60, 3))
    y = rng.normal(size=60)
    f = fit_forest(X, y, RfParams(n_trees=5, seed=9), columns=["a", "b", "c"])
    doc = json.loads(json.dumps(rf.to_dict(f)))
    assert doc["master_seed"] == 9
    g = rf.from_dict(doc)
    assert g.trees == f.trees
    np.testing.assert_array_equal(predict_forest(g, X), predict_forest(f, X))


def test_identical_partitions_pick_lower_feature():
    rng = np.random.default_rng(16)
    a = rng.normal(size=25)
    y = a * 3 + rng.normal(size=25)
    # columns 1 and 2 order the rows exactly like column 0
    X = np.column_stack([a, np.exp(a) * 7.3, a * 0.1 - 4])
    tree = fit_tree(X, y, RfParams(max_depth=2, min_samples_leaf=1, min_samples_split=2, mtry=3))
    feats = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Split):
            feats.append(node.feature)
            stack += [node.left, node.right]
    assert feats and set(feats) == {0}
