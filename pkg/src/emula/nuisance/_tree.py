"""CART kernels shared by the forest regressor and classifier.

``build_tree`` is written with array operations that both numba and numpy
execute in the same order (sequential cumulative sums, stable sorts, first
argmax), so the jitted and the pure-numpy paths grow bit-identical trees.
Prediction has a dedicated implementation per path.

Splits maximize ``S_l^2 / n_l + S_r^2 / n_r`` (equivalently minimize the
within-child sum of squares). For 0/1 labels this is the Gini criterion up
to a constant factor, so classifiers reuse the same kernel.
"""
import numpy as np

from .._accel import USE_NUMBA, njit


@njit(cache=True, nogil=True)
def build_tree(X, y, idx, max_depth, min_leaf, k_features, draws):
    """Grow one tree on the rows listed in ``idx`` (duplicates allowed).

    ``draws`` holds uniforms in [0, 1) consumed for per-node feature
    subsampling. Returns (feature, threshold, left, right, value) arrays; a
    leaf has feature == -1. Child ids are local to the tree.
    """
    n_s = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n_s + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    work = idx.copy()
    feats = np.arange(d)

    st_node = np.zeros(cap, dtype=np.int64)
    st_start = np.zeros(cap, dtype=np.int64)
    st_end = np.zeros(cap, dtype=np.int64)
    st_depth = np.zeros(cap, dtype=np.int64)
    st_end[0] = n_s
    top = 1
    n_nodes = 1
    ptr = 0
    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        depth = st_depth[top]
        rows = work[s:e]
        ys = y[rows]
        m = e - s
        total = np.cumsum(ys)[-1]
        value[node] = total / m
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        if np.all(ys == ys[0]):
            continue
        parent = total * total / m
        best = parent + 1e-12 * max(1.0, abs(parent))
        best_f = -1
        best_t = 0.0
        for i in range(k_features):
            j = i + int(draws[ptr] * (d - i))
            ptr += 1
            tmp = feats[i]
            feats[i] = feats[j]
            feats[j] = tmp
        lo = min_leaf
        hi = m - min_leaf
        n_left = np.arange(lo, hi + 1).astype(np.float64)
        for t in range(k_features):
            f = feats[t]
            vals = X[rows, f]
            order = np.argsort(vals, kind="mergesort")
            vs = vals[order]
            csum = np.cumsum(ys[order])
            sl = csum[lo - 1:hi]
            sr = total - sl
            score = sl * sl / n_left + sr * sr / (m - n_left)
            valid = vs[lo - 1:hi] < vs[lo:hi + 1]
            score = np.where(valid, score, -np.inf)
            b = np.argmax(score)
            if score[b] > best:
                best = score[b]
                best_f = f
                a_ = vs[lo - 1 + b]
                c_ = vs[lo + b]
                thr = 0.5 * (a_ + c_)
                if thr >= c_:
                    thr = a_
                best_t = thr
        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_t
        work[s:e] = np.concatenate((rows[go_left], rows[~go_left]))
        mid = s + np.sum(go_left)
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is numbered first
        st_node[top] = n_nodes + 1
        st_start[top] = mid
        st_end[top] = e
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = n_nodes
        st_start[top] = s
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _predict_numba(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] = acc / n_trees
    return out


def _predict_numpy(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    acc = np.zeros(n)
    rows = np.arange(n)
    for t in range(n_trees):
        base = offsets[t]
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = feature[base + node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            nd = node[inner]
            go_left = X[r, f[inner]] <= threshold[base + nd]
            node[inner] = np.where(go_left, left[base + nd], right[base + nd])
        acc += value[base + node]
    return acc / n_trees


predict_forest = _predict_numba if USE_NUMBA else _predict_numpy
