"""Array-backed binary decision trees and a weighted CART builder.

Both the Gini criterion on a binary target and squared error on a real
target reduce to the same split score, ``S_L**2/W_L + S_R**2/W_R`` where
``W`` is the summed weight and ``S`` the summed ``weight * target`` of each
child, so a single builder serves the forest and the boosting rounds.
"""

from __future__ import annotations

import numpy as np

LEAF = -1


class Tree:
    """A fitted tree. Rows with ``x[feature] <= threshold`` go left."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        n = len(self.feature)
        if not (len(self.threshold) == len(self.left) == len(self.right) == len(self.value) == n):
            raise ValueError("tree arrays must have equal length")
        if n == 0:
            raise ValueError("a tree needs at least one node")

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(doc["feature"], doc["threshold"], doc["left"], doc["right"], doc["value"])


def _best_split(x, t, w, counts, min_leaf):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cw = np.cumsum(w[order])
    cs = np.cumsum((w * t)[order])
    cn = np.cumsum(counts[order])
    W, S, N = cw[-1], cs[-1], cn[-1]
    cw, cs, cn = cw[:-1], cs[:-1], cn[:-1]
    valid = (xs[:-1] < xs[1:]) & (cn >= min_leaf) & (N - cn >= min_leaf)
    if not valid.any():
        return None
    wr = W - cw
    score = np.full(cw.shape, -np.inf)
    v = valid
    score[v] = cs[v] ** 2 / cw[v] + (S - cs[v]) ** 2 / wr[v]
    i = int(np.argmax(score))
    lo, hi = xs[i], xs[i + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return score[i], thr


def build_tree(
    X,
    target,
    weights,
    *,
    counts=None,
    max_depth=None,
    min_samples_split=2,
    min_samples_leaf=1,
    max_features=None,
    rng=None,
) -> Tree:
    """Grow a tree greedily; leaf values are weighted target means.

    ``counts`` gives each row's multiplicity (bootstrap draws) for the
    sample-count limits; rows with zero count are ignored. ``max_features``
    features are drawn per node; if none of them admits a valid split the
    search continues through the remaining features.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(target, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, m = X.shape
    counts = np.ones(n) if counts is None else np.asarray(counts, dtype=float)
    keep = counts > 0
    rows0 = np.flatnonzero(keep)
    if max_features is None or max_features >= m:
        max_features = m
    if max_features < m and rng is None:
        raise ValueError("feature subsampling needs an rng")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        ww = w[idx]
        value.append(float(np.dot(ww, t[idx]) / ww.sum()))
        return len(feature) - 1

    stack = [(new_node(rows0), rows0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if counts[idx].sum() < min_samples_split:
            continue
        tt = t[idx]
        if np.all(tt == tt[0]):
            continue
        order = rng.permutation(m) if max_features < m else np.arange(m)
        best = None
        for pos, j in enumerate(order):
            if pos >= max_features and best is not None:
                break
            found = _best_split(X[idx, j], tt, w[idx], counts[idx], min_samples_leaf)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], found[1], int(j))
        if best is None:
            continue
        _, thr, j = best
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = j
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(feature, threshold, left, right, value)
