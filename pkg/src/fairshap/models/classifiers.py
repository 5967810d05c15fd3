"""Weighted binary classifiers behind one predictor interface.

Every model exposes ``predict_proba(X)`` (probability of the favorable
class, shape ``(n,)``) and ``predict(X)`` (1 iff that probability is at
least 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ModelError
from .tree import Tree, build_tree

THRESHOLD = 0.5

KINDS = ("logistic_regression", "random_forest", "gradient_boosting")
ALIASES = {"lr": "logistic_regression", "rf": "random_forest", "gbm": "gradient_boosting"}

DEFAULTS = {
    "logistic_regression": {"l2": 1e-3, "max_iter": 1000, "tol": 1e-6},
    "random_forest": {
        "n_estimators": 100,
        "max_depth": None,
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "max_features": "sqrt",
        "weighting": "bootstrap",
    },
    "gradient_boosting": {
        "n_estimators": 100,
        "max_depth": 3,
        "learning_rate": 0.1,
        "min_samples_split": 2,
        "min_samples_leaf": 1,
    },
}


def _check_positive_int(name, value, allow_none=False, minimum=1):
    if value is None and allow_none:
        return
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ModelError(f"{name} must be an integer >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 42

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ModelError(f"unknown classifier kind {self.kind!r}; choose from {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[kind])
        if unknown:
            raise ModelError(f"unknown hyperparameters for {kind}: {sorted(unknown)}")
        hp = {**DEFAULTS[kind], **self.hyperparameters}
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "hyperparameters", hp)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ModelError("seed must be a non-negative integer")
        self._validate(hp)

    def _validate(self, hp):
        if self.kind == "logistic_regression":
            if not hp["l2"] >= 0:
                raise ModelError("l2 must be >= 0")
            _check_positive_int("max_iter", hp["max_iter"])
            if not hp["tol"] > 0:
                raise ModelError("tol must be > 0")
            return
        _check_positive_int("n_estimators", hp["n_estimators"], minimum=0)
        _check_positive_int("max_depth", hp["max_depth"], allow_none=self.kind == "random_forest")
        _check_positive_int("min_samples_split", hp["min_samples_split"], minimum=2)
        _check_positive_int("min_samples_leaf", hp["min_samples_leaf"])
        if self.kind == "random_forest":
            mf = hp["max_features"]
            if mf not in ("sqrt", "all", None):
                _check_positive_int("max_features", mf)
            if hp["weighting"] not in ("bootstrap", "impurity"):
                raise ModelError("weighting must be 'bootstrap' or 'impurity'")
        else:
            if not 0 < hp["learning_rate"] <= 1:
                raise ModelError("learning_rate must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassifierSpec":
        return cls(doc["kind"], dict(doc.get("hyperparameters", {})), int(doc.get("seed", 42)))


class TrainedModel:
    spec: ClassifierSpec
    feature_count: int

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise ModelError(
                f"model expects {self.feature_count} features, got shape {X.shape}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= THRESHOLD).astype(np.int64)

    def params_dict(self) -> dict:
        raise NotImplementedError


class LogisticModel(TrainedModel):
    def __init__(self, spec, coef, intercept, n_iter=0):
        self.spec = spec
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.feature_count = len(self.coef)
        self.n_iter = n_iter

    def decision_function(self, X) -> np.ndarray:
        return self._check(X) @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def params_dict(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept, "n_iter": self.n_iter}

    @classmethod
    def from_params(cls, spec, doc):
        return cls(spec, doc["coef"], doc["intercept"], doc.get("n_iter", 0))


class RandomForestModel(TrainedModel):
    def __init__(self, spec, trees, feature_count):
        self.spec = spec
        self.trees = list(trees)
        self.feature_count = feature_count

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def params_dict(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_params(cls, spec, doc, feature_count):
        return cls(spec, [Tree.from_dict(t) for t in doc["trees"]], feature_count)


class GradientBoostingModel(TrainedModel):
    """Additive log-odds model; tree leaf values already include the learning rate."""

    def __init__(self, spec, init_score, trees, feature_count, train_loss=()):
        self.spec = spec
        self.init_score = float(init_score)
        self.trees = list(trees)
        self.feature_count = feature_count
        self.train_loss = list(train_loss)

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        F = np.full(X.shape[0], self.init_score)
        for tree in self.trees:
            F += tree.predict(X)
        return F

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def params_dict(self):
        return {
            "init_score": self.init_score,
            "trees": [t.to_dict() for t in self.trees],
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_params(cls, spec, doc, feature_count):
        return cls(
            spec,
            doc["init_score"],
            [Tree.from_dict(t) for t in doc["trees"]],
            feature_count,
            doc.get("train_loss", ()),
        )


def _logistic_loss(margin, y):
    # log(1 + exp(-s*margin)) with s = +-1, computed stably
    z = np.where(y == 1, -margin, margin)
    return np.logaddexp(0.0, z)


def _fit_logistic(spec, X, y, w):
    hp = spec.hyperparameters
    n, m = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    sw = w / w.sum()
    pen = np.full(m + 1, hp["l2"])
    pen[-1] = 0.0  # intercept is not penalized
    beta = np.zeros(m + 1)

    def objective(b):
        return float(np.dot(sw, _logistic_loss(A @ b, y)) + 0.5 * np.dot(pen * b, b))

    obj = objective(beta)
    it = 0
    for it in range(1, hp["max_iter"] + 1):
        p = expit(A @ beta)
        grad = A.T @ (sw * (p - y)) + pen * beta
        if np.linalg.norm(grad) <= hp["tol"]:
            break
        H = (A * (sw * p * (1 - p))[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        slope = float(np.dot(grad, step))
        while True:
            cand = beta - t * step
            cand_obj = objective(cand)
            if cand_obj <= obj - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if cand_obj > obj:
            break
        beta, obj = cand, cand_obj
    return LogisticModel(spec, beta[:m], beta[m], it)


def _max_features(setting, m):
    if setting in (None, "all"):
        return m
    if setting == "sqrt":
        return max(1, int(math.floor(math.sqrt(m))))
    return min(int(setting), m)


def _fit_forest(spec, X, y, w):
    hp = spec.hyperparameters
    n, m = X.shape
    k = _max_features(hp["max_features"], m)
    seeds = np.random.SeedSequence(spec.seed).spawn(hp["n_estimators"])
    cum = np.cumsum(w)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        u = rng.random(n)
        if hp["weighting"] == "bootstrap":
            # draw rows with probability proportional to weight
            draws = np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), n - 1)
            counts = np.bincount(draws, minlength=n).astype(float)
            tree_w = counts
        else:
            draws = np.minimum((u * n).astype(np.int64), n - 1)
            counts = np.bincount(draws, minlength=n).astype(float)
            tree_w = counts * w
        trees.append(
            build_tree(
                X,
                y,
                tree_w,
                counts=counts,
                max_depth=hp["max_depth"],
                min_samples_split=hp["min_samples_split"],
                min_samples_leaf=hp["min_samples_leaf"],
                max_features=k,
                rng=rng,
            )
        )
    return RandomForestModel(spec, trees, m)


def _fit_boosting(spec, X, y, w):
    hp = spec.hyperparameters
    n, m = X.shape
    sw = w / w.sum()
    base = float(np.dot(sw, y))
    init = math.log(base / (1.0 - base))
    F = np.full(n, init)
    losses = [float(np.dot(sw, _logistic_loss(F, y)))]
    trees = []
    for _ in range(hp["n_estimators"]):
        p = expit(F)
        tree = build_tree(
            X,
            y - p,
            w,
            max_depth=hp["max_depth"],
            min_samples_split=hp["min_samples_split"],
            min_samples_leaf=hp["min_samples_leaf"],
        )
        leaf_of = tree.apply(X)
        values = np.zeros(tree.node_count)
        for leaf in np.unique(leaf_of):
            idx = leaf_of == leaf
            ww, pp = w[idx], p[idx]
            hess = float(np.dot(ww, pp * (1.0 - pp)))
            grad = float(np.dot(ww, y[idx] - pp))
            if hess <= 1e-300:
                continue
            step = hp["learning_rate"] * grad / hess
            before = float(np.dot(ww, _logistic_loss(F[idx], y[idx])))
            # halve the Newton step until the leaf's loss does not go up
            for _ in range(60):
                if float(np.dot(ww, _logistic_loss(F[idx] + step, y[idx]))) <= before:
                    break
                step *= 0.5
            else:
                step = 0.0
            values[leaf] = step
        tree.value = values
        F = F + values[leaf_of]
        trees.append(tree)
        losses.append(float(np.dot(sw, _logistic_loss(F, y))))
    return GradientBoostingModel(spec, init, trees, m, losses)


def train(spec: ClassifierSpec, X, y, weights=None) -> TrainedModel:
    """Fit a classifier; ``weights`` scale each row's contribution."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ModelError("X must be a 2-D matrix")
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise ModelError("X, y and weights must have the same number of rows")
    if not np.all(np.isfinite(X)):
        raise ModelError("features contain non-finite values")
    if not np.all(np.isfinite(w)) or not np.all(w > 0):
        raise ModelError("weights must be finite and strictly positive")
    if not set(np.unique(y).tolist()) <= {0, 1}:
        raise ModelError("labels must be binary {0,1}")
    y = y.astype(float)
    if n == 0 or y.min() == y.max():
        raise ModelError("training data must contain both classes")
    fit = {
        "logistic_regression": _fit_logistic,
        "random_forest": _fit_forest,
        "gradient_boosting": _fit_boosting,
    }[spec.kind]
    return fit(spec, X, y, w)


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    return model.predict_proba(X)


def predict(model: TrainedModel, X) -> np.ndarray:
    return model.predict(X)
