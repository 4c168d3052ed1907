"""Brute-force reference implementations, deliberately independent of the package code."""

import numpy as np


def sse(v):
    v = np.asarray(v, dtype=float)
    return float(np.sum((v - v.mean()) ** 2)) if v.size else 0.0


def brute_best_split(X, y, min_leaf, rtol=1e-10):
    """Exhaustive (feature, midpoint) search with direct SSE sums.

    Returns (feature, threshold, reduction) or None, with ties going to the
    lower feature index, then the lower threshold. Reductions within
    ``rtol * SSE(parent)`` are treated as equal.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    parent = sse(y)
    if y.size < 2 * min_leaf or np.all(y == y[0]):
        return None
    cands = []
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals, vals[1:]):
            m = 0.5 * (lo + hi)
            left = X[:, f] <= m
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            red = parent - sse(y[left]) - sse(y[~left])
            cands.append((red, f, m))
    if not cands:
        return None
    top = max(c[0] for c in cands)
    red, f, m = min((c for c in cands if c[0] >= top - rtol * parent), key=lambda c: (c[1], c[2]))
    if red <= 1e-12 * parent:
        return None
    return f, m, red


def brute_tree(X, y, depth, min_leaf, min_split):
    """Nested tuples: ('leaf', mean) or ('split', f, thr, left, right)."""
    y = np.asarray(y, dtype=float)
    if depth == 0 or y.size < min_split:
        return ("leaf", float(y.mean()))
    found = brute_best_split(X, y, min_leaf)
    if found is None:
        return ("leaf", float(y.mean()))
    f, thr, _ = found
    left = X[:, f] <= thr
    return ("split", f, thr,
            brute_tree(X[left], y[left], depth - 1, min_leaf, min_split),
            brute_tree(X[~left], y[~left], depth - 1, min_leaf, min_split))


def tree_as_tuple(node):
    from damvol.forest import Leaf
    if isinstance(node, Leaf):
        return ("leaf", node.value)
    return ("split", node.feature, node.threshold, tree_as_tuple(node.left), tree_as_tuple(node.right))


def same_tree(a, b, atol=1e-9):
    if a[0] != b[0]:
        return False
    if a[0] == "leaf":
        return abs(a[1] - b[1]) <= atol * max(1.0, abs(a[1]))
    return (a[1] == b[1] and a[2] == b[2]
            and same_tree(a[3], b[3], atol) and same_tree(a[4], b[4], atol))


def random_tree_instance(rng):
    n = int(rng.integers(4, 31))
    p = int(rng.integers(1, 4))
    X = rng.normal(size=(n, p)) * 10
    y = rng.normal(size=n) * 5 + np.where(X[:, 0] > 0, 20.0, 0.0)
    min_leaf = int(rng.integers(1, 4))
    depth = int(rng.integers(1, 3))
    return X, y, min_leaf, depth
