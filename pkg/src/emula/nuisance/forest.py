"""Random forests (bootstrap CART ensembles) for outcome and treatment nuisances."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._tree import build_tree, predict_forest
from .linear import PROBA_FLOOR

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def tree_seed(seed: int, tree_index: int) -> int:
    """Per-tree seed; independent of how trees are scheduled."""
    return splitmix64((int(seed) ^ splitmix64(tree_index)) & _MASK)


@dataclass
class ForestModel:
    classifier: bool
    n_trees: int
    max_depth: int
    min_leaf: int
    seed: int
    column_order: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    n_fit: int

    @property
    def n_features(self) -> int:
        return self.column_order.size

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape}")
        xo = np.ascontiguousarray(x[:, self.column_order])
        p = predict_forest(xo, self.feature, self.threshold, self.left, self.right, self.value, self.offsets)
        if self.classifier:
            p = np.clip(p, PROBA_FLOOR, 1.0 - PROBA_FLOOR)
        return p

    def tree_nodes(self, t: int):
        lo, hi = self.offsets[t], self.offsets[t + 1]
        return (self.feature[lo:hi], self.threshold[lo:hi], self.left[lo:hi],
                self.right[lo:hi], self.value[lo:hi])

    def to_json(self) -> dict:
        """Nested node records, features referenced by input column index."""
        trees = []
        for t in range(self.n_trees):
            f, thr, le, ri, val = self.tree_nodes(t)

            def rec(i):
                if f[i] < 0:
                    return {"leaf": float(val[i])}
                return {"feature": int(self.column_order[f[i]]), "threshold": float(thr[i]),
                        "left": rec(le[i]), "right": rec(ri[i])}

            trees.append(rec(0))
        return {"kind": "forest_classifier" if self.classifier else "forest_regressor",
                "n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "seed": self.seed, "n_fit": self.n_fit, "trees": trees}


def _grow(X, y, seed, max_depth, min_leaf, k):
    n = X.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.integers(0, n, size=n, dtype=np.int64)
    draws = rng.random((2 * n + 1) * k)
    return build_tree(X, y, idx, max_depth, min_leaf, k, draws)


def fit_forest(x, y, n_trees: int = 100, max_depth: int = 10, min_leaf: int = 5, seed: int = 0,
               classifier: bool = False, feature_names=None, n_jobs: int = 1) -> ForestModel:
    """Bootstrap forest of CART trees with ceil(sqrt(d)) candidate features per split.

    With ``feature_names`` the columns are put in sorted-name order before
    fitting, so the fitted forest does not depend on column order.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size or y.size < 2:
        raise ValueError("need a 2-D x with len(y) >= 2 matching rows")
    if n_trees < 1 or max_depth < 1 or min_leaf < 1:
        raise ValueError("n_trees, max_depth and min_leaf must be >= 1")
    d = x.shape[1]
    if feature_names is not None:
        if len(feature_names) != d:
            raise ValueError("feature_names length must equal column count")
        order = np.array(sorted(range(d), key=lambda j: feature_names[j]), dtype=np.int64)
    else:
        order = np.arange(d, dtype=np.int64)
    X = np.ascontiguousarray(x[:, order])
    k = max(1, math.ceil(math.sqrt(d)))
    seeds = [tree_seed(seed, t) for t in range(n_trees)]

    def grow(s):
        return _grow(X, y, s, int(max_depth), int(min_leaf), k)

    if n_jobs > 1 and n_trees > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            trees = list(ex.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    sizes = [t[0].size for t in trees]
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(sizes)
    cat = [np.concatenate([t[i] for t in trees]) for i in range(5)]
    return ForestModel(classifier, int(n_trees), int(max_depth), int(min_leaf), int(seed), order,
                       *cat, offsets, y.size)
