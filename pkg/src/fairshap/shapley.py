"""Model-agnostic Shapley values over a background sample.

The coalition value of a feature subset ``S`` for an instance ``x`` is the
mean model output over background rows whose ``S`` columns are overwritten
with ``x``'s values (interventional expectation). ``phi0`` is the value of
the empty coalition and ``fx`` the model output at ``x`` itself.

Two estimators are provided: exact enumeration of all ``2**M`` coalitions,
and antithetic permutation sampling for wide inputs.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ExplainError
from .models import GradientBoostingModel, LogisticModel, RandomForestModel

# composite rows evaluated per model call
_CHUNK_ROWS = 1 << 18
_TREE_FEATURES_MAX = 8


@dataclass(frozen=True, eq=False)
class ExplainerConfig:
    background: np.ndarray
    exact_threshold: int = 15
    permutations: int = 200
    seed: int = 42

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=float)
        if bg.ndim != 2 or bg.shape[0] == 0:
            raise ExplainError("background must be a non-empty 2-D matrix")
        if self.permutations < 1:
            raise ExplainError("permutations must be >= 1")
        if self.exact_threshold < 0:
            raise ExplainError("exact_threshold must be >= 0")
        object.__setattr__(self, "background", bg)


@dataclass(frozen=True, eq=False)
class Explanation:
    phi: np.ndarray
    phi0: float
    fx: float
    method: str
    std_error: np.ndarray
    residual: float = 0.0  # local-accuracy gap before redistribution (sampled only)

    @property
    def n_features(self) -> int:
        return len(self.phi)

    def local_accuracy_gap(self) -> float:
        return float(self.fx - self.phi0 - math.fsum(self.phi))


def _output_fn(model):
    fn = getattr(model, "predict_proba", None)
    if fn is None:
        if not callable(model):
            raise ExplainError("model must expose predict_proba or be callable")
        fn = model

    def f(X):
        out = np.asarray(fn(X), dtype=float)
        if out.ndim == 2 and out.shape[1] == 2:
            out = out[:, 1]
        return out.reshape(X.shape[0])

    return f


def _group_means(preds: np.ndarray) -> np.ndarray:
    """Row means of a (coalitions, B) array, exact when a row is constant."""
    ref = preds[:, :1]
    return ref[:, 0] + (preds - ref).mean(axis=1)


def _check_x(x, background):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != background.shape[1]:
        raise ExplainError(
            f"instance has shape {x.shape}, background has {background.shape[1]} columns"
        )
    return x


class _Evaluator:
    """Evaluates coalition values by materializing composite rows."""

    def __init__(self, model):
        self.f = _output_fn(model)

    def point(self, x) -> float:
        return float(self.f(x[None, :])[0])

    def coalitions(self, x, background, in_coalition: np.ndarray) -> np.ndarray:
        """Values for a boolean (C, M) matrix of coalitions."""
        B, M = background.shape
        C = in_coalition.shape[0]
        out = np.empty(C)
        step = max(1, _CHUNK_ROWS // B)
        for start in range(0, C, step):
            mask = in_coalition[start : start + step]
            comp = np.where(mask[:, None, :], x[None, None, :], background[None, :, :])
            preds = self.f(comp.reshape(-1, M)).reshape(mask.shape[0], B)
            out[start : start + step] = _group_means(preds)
        return out


class _LogisticEvaluator(_Evaluator):
    """Same values for logistic models without building composites.

    A composite's margin is the background row's margin plus the
    coefficient-weighted shifts of the coalition's features.
    """

    def __init__(self, model: LogisticModel):
        super().__init__(model)
        self.coef = model.coef
        self.intercept = model.intercept

    def coalitions(self, x, background, in_coalition):
        base = background @ self.coef + self.intercept
        shift = (x[None, :] - background) * self.coef[None, :]
        C, B = in_coalition.shape[0], background.shape[0]
        out = np.empty(C)
        step = max(1, _CHUNK_ROWS // B)
        for start in range(0, C, step):
            mask = in_coalition[start : start + step].astype(float)
            margins = base[None, :] + mask @ shift.T
            out[start : start + step] = _group_means(expit(margins))
        return out


class _TreeEnsembleEvaluator(_Evaluator):
    """Same values for tree ensembles, one tree at a time.

    A tree's output on a composite depends only on which of the tree's own
    split features come from ``x``, so each tree is evaluated once per
    distinct pattern of those features and the results are gathered.
    Trees are summed in model order so values match the generic path.
    """

    def __init__(self, model):
        super().__init__(model)
        self.trees = model.trees
        self.boosted = isinstance(model, GradientBoostingModel)
        self.start = model.init_score if self.boosted else 0.0
        self.used = [np.array(sorted(t.used_features()), dtype=np.int64) for t in self.trees]

    def coalitions(self, x, background, in_coalition):
        B = background.shape[0]
        C = in_coalition.shape[0]
        out = np.empty(C)
        step = max(1, _CHUNK_ROWS // B)
        for start in range(0, C, step):
            mask = in_coalition[start : start + step]
            acc = np.full((mask.shape[0], B), self.start)
            for tree, used in zip(self.trees, self.used):
                acc += self._tree_values(tree, used, x, background, mask)
            if self.boosted:
                acc = expit(acc)
            else:
                acc /= len(self.trees)
            out[start : start + step] = _group_means(acc)
        return out

    @staticmethod
    def _tree_values(tree, used, x, background, mask):
        if used.size == 0:
            return np.broadcast_to(tree.predict(background[:1]), (mask.shape[0], background.shape[0]))
        sub = mask[:, used]
        if used.size < 63:  # pack each pattern into one integer
            codes = sub.astype(np.int64) @ (np.int64(1) << np.arange(used.size, dtype=np.int64))
            _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
            patterns = sub[first]
        else:
            patterns, inverse = np.unique(sub, axis=0, return_inverse=True)
        comp = np.repeat(background[None, :, :], patterns.shape[0], axis=0)
        cols = comp[:, :, used]
        comp[:, :, used] = np.where(patterns[:, None, :], x[used][None, None, :], cols)
        preds = tree.predict(comp.reshape(-1, background.shape[1])).reshape(patterns.shape[0], -1)
        return preds[inverse.reshape(-1)]


def _evaluator(model) -> _Evaluator:
    if isinstance(model, LogisticModel):
        return _LogisticEvaluator(model)
    if isinstance(model, (RandomForestModel, GradientBoostingModel)) and model.trees:
        # pays off only while trees split on few features each
        if np.mean([len(t.used_features()) for t in model.trees]) <= _TREE_FEATURES_MAX:
            return _TreeEnsembleEvaluator(model)
    return _Evaluator(model)


def value_function(model, x, subset, background) -> float:
    """Coalition value ``f_x(S)`` for feature indices ``subset``."""
    background = np.asarray(background, dtype=float)
    x = _check_x(x, background)
    M = background.shape[1]
    mask = np.zeros((1, M), dtype=bool)
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= M):
        raise ExplainError(f"subset {sorted(subset)} out of range for {M} features")
    mask[0, idx] = True
    return float(_evaluator(model).coalitions(x, background, mask)[0])


def shapley_kernel(M: int) -> np.ndarray:
    """``|S|! (M-|S|-1)! / M!`` for ``|S| = 0..M-1``."""
    total = math.factorial(M)
    return np.array([math.factorial(s) * math.factorial(M - s - 1) / total for s in range(M)])


def explain_exact(model, x, config: ExplainerConfig) -> Explanation:
    bg = config.background
    x = _check_x(x, bg)
    M = bg.shape[1]
    if M > config.exact_threshold:
        raise ExplainError(
            f"exact enumeration over {M} features exceeds exact_threshold={config.exact_threshold}; "
            "use the sampled method"
        )
    ev = _evaluator(model)
    fx = ev.point(x)
    masks = np.arange(1 << M, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(M)) & 1).astype(bool)
    v = np.empty(1 << M)
    v[:-1] = ev.coalitions(x, bg, bits[:-1])
    v[-1] = fx
    sizes = bits.sum(axis=1)
    kernel = shapley_kernel(M) if M else np.zeros(0)
    phi = np.empty(M)
    for i in range(M):
        without = masks[~bits[:, i]]
        gains = v[without | (1 << i)] - v[without]
        phi[i] = np.dot(kernel[sizes[without]], gains)
    return Explanation(phi, float(v[0]), fx, "exact", np.zeros(M))


def _row_seed(seed: int, x: np.ndarray) -> np.random.SeedSequence:
    # seeded by the instance's content so results do not depend on row order
    digest = hashlib.sha256(np.ascontiguousarray(x, dtype=float).tobytes()).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint32).tolist()
    return np.random.SeedSequence([int(seed), *words])


def explain_sampled(model, x, config: ExplainerConfig) -> Explanation:
    """Antithetic permutation sampling.

    ``config.permutations`` is rounded up to an even count: each drawn
    ordering is paired with its reverse. Each ordering's marginal
    contributions telescope to ``fx - phi0``; the remaining floating-point
    residual is spread over features in proportion to ``|phi|``.
    """
    bg = config.background
    x = _check_x(x, bg)
    B, M = bg.shape
    ev = _evaluator(model)
    fx = ev.point(x)
    phi0 = float(ev.coalitions(x, bg, np.zeros((1, M), dtype=bool))[0])
    if M == 0:
        return Explanation(np.zeros(0), phi0, fx, "sampled", np.zeros(0), fx - phi0)
    rng = np.random.default_rng(_row_seed(config.seed, x))
    n_pairs = (config.permutations + 1) // 2
    pair_est = np.empty((n_pairs, M))
    per_chunk = max(1, _CHUNK_ROWS // (2 * B * max(1, M - 1)))
    steps = np.arange(M + 1)[:, None]
    for start in range(0, n_pairs, per_chunk):
        count = min(per_chunk, n_pairs - start)
        fwd = np.stack([rng.permutation(M) for _ in range(count)])
        orders = np.concatenate([fwd, fwd[:, ::-1]])
        rank = np.empty_like(orders)
        rows = np.arange(orders.shape[0])[:, None]
        rank[rows, orders] = np.arange(M)[None, :]
        # coalition j holds the first j features of each ordering
        inner = (rank[:, None, :] < steps[None, 1:M, :]).reshape(-1, M)
        values = np.empty((orders.shape[0], M + 1))
        values[:, 0] = phi0
        values[:, M] = fx
        if M > 1:
            values[:, 1:M] = ev.coalitions(x, bg, inner).reshape(orders.shape[0], M - 1)
        gains = np.diff(values, axis=1)
        contrib = np.empty_like(gains)
        contrib[rows, orders] = gains
        pair_est[start : start + count] = 0.5 * (contrib[:count] + contrib[count:])
    phi = pair_est.mean(axis=0)
    if n_pairs > 1:
        std_error = pair_est.std(axis=0, ddof=1) / math.sqrt(n_pairs)
    else:
        std_error = np.full(M, np.nan)
    residual = fx - phi0 - math.fsum(phi)
    scale = np.abs(phi).sum()
    if scale > 0:
        phi = phi + residual * np.abs(phi) / scale
    return Explanation(phi, phi0, fx, "sampled", std_error, residual)


def explain(model, x, config: ExplainerConfig, method: str = "auto") -> Explanation:
    if method not in ("auto", "exact", "sampled"):
        raise ExplainError(f"unknown method {method!r}")
    if method == "exact" or (method == "auto" and config.background.shape[1] <= config.exact_threshold):
        return explain_exact(model, x, config)
    return explain_sampled(model, x, config)


def explain_batch(model, X, config: ExplainerConfig, method: str = "auto") -> list[Explanation]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ExplainError("X must be a 2-D matrix")
    out = []
    for i, row in enumerate(X):
        try:
            out.append(explain(model, row, config, method))
        except ExplainError as exc:
            raise ExplainError(f"row {i}: {exc}") from exc
    return out


def phi_matrix(explanations) -> np.ndarray:
    if not explanations:
        return np.zeros((0, 0))
    return np.vstack([e.phi for e in explanations])


def select_background(X, size: int = 100, seed: int = 42) -> np.ndarray:
    """Up to ``size`` rows of ``X`` drawn without replacement, kept in original order."""
    X = np.asarray(X, dtype=float)
    if size < 1:
        raise ExplainError("background size must be >= 1")
    if X.shape[0] <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], size, replace=False))
    return X[idx]


def write_explanations_csv(path, explanations, feature_names, row_ids=None) -> None:
    """One row per instance: its id, one phi column per feature, then phi0, fx, method."""
    names = list(feature_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", *names, "phi0", "fx", "method"])
        for i, e in enumerate(explanations):
            rid = i if row_ids is None else row_ids[i]
            writer.writerow([rid, *map(repr, e.phi.tolist()), repr(e.phi0), repr(e.fx), e.method])


def read_explanations_csv(path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of ``write_explanations_csv``: names, phi matrix, phi0, fx."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    names = header[1:-3]
    body = rows[1:]
    phi = np.array([[float(c) for c in r[1:-3]] for r in body]).reshape(len(body), len(names))
    phi0 = np.array([float(r[-3]) for r in body])
    fx = np.array([float(r[-2]) for r in body])
    return names, phi, phi0, fx
