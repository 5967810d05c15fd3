"""Test doubles and independent oracles shared by the test modules."""

import csv
import itertools
import math
import os

import numpy as np

from fairshap.models import Tree

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GERMAN_CONFIG = os.path.join(ROOT, "configs", "german.json")


class TreeModel:
    """Wraps a bare ``Tree`` as a predictor."""

    def __init__(self, tree):
        self.tree = tree

    def predict_proba(self, X):
        return self.tree.predict(np.asarray(X, dtype=float))


class FunctionModel:
    def __init__(self, fn):
        self.fn = fn

    def predict_proba(self, X):
        return self.fn(np.asarray(X, dtype=float))


class LinearMargin:
    """Exposes a logistic model's linear margin as its output."""

    def __init__(self, coef, intercept):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)

    def predict_proba(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def random_tree(rng, n_features, depth=3, features=None):
    """A complete random tree of the given depth with leaf values in [0, 1]."""
    pool = list(range(n_features)) if features is None else list(features)
    n_inner = 2**depth - 1
    n_nodes = 2 ** (depth + 1) - 1
    feature = np.full(n_nodes, -1)
    threshold = np.zeros(n_nodes)
    left = np.full(n_nodes, -1)
    right = np.full(n_nodes, -1)
    value = rng.uniform(0, 1, n_nodes)
    for i in range(n_inner):
        feature[i] = rng.choice(pool)
        threshold[i] = rng.normal()
        left[i] = 2 * i + 1
        right[i] = 2 * i + 2
    return Tree(feature, threshold, left, right, value)


def brute_force_shapley(f, x, background):
    """Average marginal contribution over all M! orderings, composite rows built one by one."""
    M = len(x)

    def value(coalition):
        total = 0.0
        for b in background:
            z = np.array(b, dtype=float)
            for j in coalition:
                z[j] = x[j]
            total += float(f(z[None, :])[0])
        return total / len(background)

    phi = np.zeros(M)
    cache = {}
    orders = list(itertools.permutations(range(M)))
    for order in orders:
        coalition = []
        prev = cache.setdefault(frozenset(), value(()))
        for j in order:
            coalition.append(j)
            key = frozenset(coalition)
            if key not in cache:
                cache[key] = value(tuple(coalition))
            phi[j] += cache[key] - prev
            prev = cache[key]
    return phi / math.factorial(M)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def null_bias_rows(n, seed):
    """Sensitive attribute independent of the target and of every informative feature."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    a = rng.integers(0, 2, n)
    margin = 2.0 * X[:, 0] - 1.5 * X[:, 1] + 1.0 * X[:, 2]
    y = (rng.random(n) < 1 / (1 + np.exp(-margin))).astype(int)
    rows = [[int(a[i]), *map(float, X[i]), int(y[i])] for i in range(n)]
    return ["group", "x1", "x2", "x3", "x4", "label"], rows


def cell_fixture_rows(counts):
    """Rows realising (sensitive, target) cell counts, with one numeric feature."""
    rows = []
    i = 0
    for (a, y), c in sorted(counts.items()):
        for _ in range(c):
            rows.append([a, float(i % 7), y])
            i += 1
    return ["a", "f", "y"], rows
