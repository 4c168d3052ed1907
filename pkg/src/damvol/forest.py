"""CART regression trees and a bagged random forest, written from scratch."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Leaf:
    value: float
    count: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 2
    min_samples_split: int = 4
    mtry: int | None = None  # None -> max(1, p // 3)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def resolve_mtry(self, p: int) -> int:
        if self.mtry is None:
            return max(1, p // 3)
        if self.mtry > p:
            raise ValueError(f"mtry={self.mtry} exceeds the {p} available features")
        return self.mtry

    @classmethod
    def from_dict(cls, d: dict | None) -> RfParams:
        return cls(**(d or {}))


TIE_RTOL = 1e-10


def best_split(x, y, min_samples_leaf: int = 1):
    """Best variance-reducing threshold on one feature.

    Returns ``(threshold, sse_reduction)`` or ``None`` when every candidate
    violates the leaf minimum, ``x`` has a single distinct value, or no
    split reduces the SSE. Thresholds are midpoints between adjacent distinct
    sorted values; ties keep the lowest threshold. Gains within
    ``TIE_RTOL * SSE(parent)`` of each other count as tied, so rounding in the
    running sums cannot break a mathematical tie.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2 * min_samples_leaf or n < 2:
        return None
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    if xs[0] == xs[-1] or np.all(ys == ys[0]):
        return None
    yc = ys - ys.mean()
    csum = np.cumsum(yc)
    total = csum[-1]
    i = np.arange(min_samples_leaf - 1, n - min_samples_leaf)
    i = i[xs[i] < xs[i + 1]]
    if i.size == 0:
        return None
    nl = i + 1.0
    nr = n - nl
    sl = csum[i]
    # SSE(parent) - SSE(left) - SSE(right) for centered targets
    gain = sl * sl / nl + (total - sl) ** 2 / nr - total * total / n
    sse_parent = float(yc @ yc)
    k = int(np.argmax(gain >= gain.max() - TIE_RTOL * sse_parent))
    if gain[k] <= 1e-12 * sse_parent:
        return None
    lo, hi = xs[i[k]], xs[i[k] + 1]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return float(thr), float(gain[k])


def _leaf(y) -> Leaf:
    m = float(np.clip(y.mean(), y.min(), y.max()))
    return Leaf(m, int(y.size))


def _grow(X, y, idx, depth, params: RfParams, mtry, pool, rng) -> TreeNode:
    yy = y[idx]
    n = idx.size
    if ((params.max_depth is not None and depth >= params.max_depth)
            or n < params.min_samples_split or n < 2 * params.min_samples_leaf
            or pool.size == 0):
        return _leaf(yy)
    order = rng.permutation(pool) if mtry < pool.size else pool
    tol = TIE_RTOL * float(np.sum((yy - yy.mean()) ** 2))
    best = None  # (gain, feature, threshold)
    for t, f in enumerate(order):
        if t >= mtry and best is not None:
            break
        found = best_split(X[idx, f], yy, params.min_samples_leaf)
        if found is None:
            continue
        cand = (found[1], int(f), found[0])
        if (best is None or cand[0] > best[0] + tol
                or (cand[0] >= best[0] - tol and cand[1:] < best[1:])):
            best = cand
    if best is None:
        return _leaf(yy)
    f, thr = best[1], best[2]
    go_left = X[idx, f] <= thr
    return Split(f, thr,
                 _grow(X, y, idx[go_left], depth + 1, params, mtry, pool, rng),
                 _grow(X, y, idx[~go_left], depth + 1, params, mtry, pool, rng))


def informative_features(X) -> np.ndarray:
    """Indices of columns that are not constant over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    return np.flatnonzero(np.any(X != X[:1], axis=0))


def fit_tree(X, y, params: RfParams = RfParams(), rng=None, pool=None) -> TreeNode:
    """Grow one CART tree.

    At each node ``mtry`` candidate features are drawn without replacement
    from ``pool`` (default: every column). If none of them admits a valid
    split, further features from the same permutation are tried before the
    node becomes a leaf. Equal gains resolve to the lower feature index, then
    the lower threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("cannot grow a tree on zero rows")
    p = X.shape[1]
    pool = np.arange(p) if pool is None else np.asarray(pool, dtype=int)
    mtry = min(params.resolve_mtry(p), max(pool.size, 1))
    rng = np.random.default_rng(params.seed) if rng is None else rng
    return _grow(X, y, np.arange(X.shape[0]), 0, params, mtry, pool, rng)


@dataclass
class _FlatTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


def _flatten(root: TreeNode) -> _FlatTree:
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(root, -1, False)]
    while stack:
        node, parent, is_right = stack.pop()
        k = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = k
        if isinstance(node, Leaf):
            feature.append(-1); threshold.append(0.0); value.append(node.value)
            left.append(-1); right.append(-1)
        else:
            feature.append(node.feature); threshold.append(node.threshold); value.append(0.0)
            left.append(-1); right.append(-1)
            stack.append((node.right, k, True))
            stack.append((node.left, k, False))
    return _FlatTree(np.array(feature), np.array(threshold, dtype=float), np.array(left),
                     np.array(right), np.array(value, dtype=float))


def _predict_flat(t: _FlatTree, X) -> np.ndarray:
    node = np.zeros(X.shape[0], dtype=int)
    rows = np.arange(X.shape[0])
    active = t.feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[active]
        go_left = X[r, t.feature[nd]] <= t.threshold[nd]
        node[active] = np.where(go_left, t.left[nd], t.right[nd])
        active = t.feature[node] >= 0
    return t.value[node]


def predict_tree(root: TreeNode, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _predict_flat(_flatten(root), X)


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


@dataclass
class Forest:
    trees: list[TreeNode]
    params: RfParams
    n_features: int
    columns: tuple[str, ...] = ()
    feature_pool: tuple[int, ...] = ()
    _flat: list[_FlatTree] | None = field(default=None, repr=False, compare=False)

    def predict(self, X) -> np.ndarray:
        return predict_forest(self, X)

    def flat(self) -> list[_FlatTree]:
        if self._flat is None:
            self._flat = [_flatten(t) for t in self.trees]
        return self._flat


def tree_seed(master: int, t: int) -> np.random.SeedSequence:
    """Independent stream for tree ``t``; depends only on (master, t)."""
    return np.random.SeedSequence(entropy=master, spawn_key=(t,))


def _fit_one(X, y, params: RfParams, pool, t: int) -> TreeNode:
    rng = np.random.default_rng(tree_seed(params.seed, t))
    n = X.shape[0]
    if params.bootstrap:
        idx = rng.integers(0, n, size=n)
        return fit_tree(X[idx], y[idx], params, rng, pool)
    return fit_tree(X, y, params, rng, pool)


def fit_forest(X, y, params: RfParams = RfParams(), columns=None, n_jobs: int = 1) -> Forest:
    """Bagged CART ensemble.

    Columns that are constant over the training rows can never split and are
    left out of the per-node candidate pool, so ``mtry`` defaults to a third
    of the informative columns. Tree ``t`` uses its own seed stream derived
    from ``(params.seed, t)``, so the result does not depend on ``n_jobs``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size}")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a forest on zero rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    p = X.shape[1]
    params.resolve_mtry(p)
    pool = informative_features(X)
    if params.mtry is None:
        params_eff = params
        mtry_params = RfParams(**{**asdict(params), "mtry": max(1, pool.size // 3)})
    else:
        params_eff = mtry_params = params
    if n_jobs == 1:
        trees = [_fit_one(X, y, mtry_params, pool, t) for t in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            trees = list(ex.map(lambda t: _fit_one(X, y, mtry_params, pool, t),
                                range(params.n_trees)))
    cols = tuple(columns) if columns is not None else tuple(f"x{j}" for j in range(p))
    return Forest(trees, params_eff, p, cols, tuple(int(j) for j in pool))


def predict_forest(f: Forest, X) -> np.ndarray:
    """Mean of the tree predictions, accumulated in tree order."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if f.n_features == 1 else X[None, :]
    if X.shape[1] != f.n_features:
        raise ValueError(f"forest expects {f.n_features} columns, got {X.shape[1]}")
    total = np.zeros(X.shape[0])
    for t in f.flat():
        total += _predict_flat(t, X)
    return total / len(f.trees)


def node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.value, "count": node.count}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": node_to_dict(node.left), "right": node_to_dict(node.right)}


def node_from_dict(d: dict) -> TreeNode:
    if "leaf" in d:
        return Leaf(float(d["leaf"]), int(d["count"]))
    return Split(int(d["feature"]), float(d["threshold"]),
                 node_from_dict(d["left"]), node_from_dict(d["right"]))


def to_dict(f: Forest) -> dict:
    return {
        "kind": "random_forest",
        "params": asdict(f.params),
        "master_seed": f.params.seed,
        "n_features": f.n_features,
        "columns": list(f.columns),
        "feature_pool": list(f.feature_pool),
        "trees": [node_to_dict(t) for t in f.trees],
    }


def from_dict(d: dict) -> Forest:
    return Forest([node_from_dict(t) for t in d["trees"]], RfParams(**d["params"]),
                  int(d["n_features"]), tuple(d["columns"]), tuple(d["feature_pool"]))
