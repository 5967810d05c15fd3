"""Group and individual fairness measures on binary predictions.

Group ``0`` is unprivileged and ``1`` privileged; label ``1`` is favorable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .models.knn import KnnIndex

DEFAULT_K = 5


def _binary(name, values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise MetricError(f"{name} must be one-dimensional")
    if arr.size and not set(np.unique(arr).tolist()) <= {0, 1}:
        raise MetricError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def disparate_impact(predictions, sensitive) -> float:
    """Favorable-prediction rate of the unprivileged group over the privileged group.

    Returns ``inf`` when only the privileged rate is zero and ``nan`` when
    both are; callers report those as undefined.
    """
    yhat = _binary("predictions", predictions)
    a = _binary("sensitive", sensitive)
    if yhat.shape != a.shape:
        raise MetricError("predictions and sensitive must have equal length")
    n0, n1 = int(np.sum(a == 0)), int(np.sum(a == 1))
    if n0 == 0 or n1 == 0:
        empty = "unprivileged (A=0)" if n0 == 0 else "privileged (A=1)"
        raise MetricError(f"disparate impact undefined: {empty} group is empty")
    pos0, pos1 = int(yhat[a == 0].sum()), int(yhat[a == 1].sum())
    if pos1 == 0:
        return math.nan if pos0 == 0 else math.inf
    return (pos0 * n1) / (n0 * pos1)


def true_positive_rate(predictions, labels, mask) -> float:
    positives = (labels == 1) & mask
    return float(predictions[positives].sum() / positives.sum())


def equal_opportunity(predictions, labels, sensitive) -> float:
    """TPR of the unprivileged group minus TPR of the privileged group."""
    yhat = _binary("predictions", predictions)
    y = _binary("labels", labels)
    a = _binary("sensitive", sensitive)
    if not yhat.shape == y.shape == a.shape:
        raise MetricError("predictions, labels and sensitive must have equal length")
    tprs = []
    for g in (0, 1):
        cell = (a == g) & (y == 1)
        if not cell.any():
            raise MetricError(
                f"equal opportunity undefined: no positives (Y=1) in group A={g}"
            )
        tprs.append(int(yhat[cell].sum()) / int(cell.sum()))
    return tprs[0] - tprs[1]


def consistency_from_predictions(
    predictions, features, sensitive_index: int | None, k: int = DEFAULT_K, include_self: bool = True
) -> float:
    """``1 - mean |yhat_n - mean(yhat over kNN(x'_n))|`` with ``x'`` lacking the sensitive column.

    With ``include_self`` the query row is part of its own neighbourhood.
    Otherwise the neighbourhood is the ``k`` nearest other rows.
    """
    yhat = np.asarray(predictions, dtype=float)
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] != yhat.shape[0]:
        raise MetricError("features must be a matrix with one row per prediction")
    n = X.shape[0]
    if n == 0:
        raise MetricError("consistency needs at least one row")
    if sensitive_index is not None:
        X = np.delete(X, sensitive_index, axis=1)
    need = k if include_self else k + 1
    if isinstance(k, bool) or k < 1 or need > n:
        raise MetricError(f"k={k} is not usable with {n} test rows")
    index = KnnIndex(X, need)
    nbrs = index.query_many(X)
    if not include_self:
        rows = np.arange(n)[:, None]
        not_self = nbrs != rows
        # drop the query row if present, otherwise the farthest neighbour
        keep = np.where(not_self.all(axis=1)[:, None], np.arange(need) < k, not_self)
        nbrs = nbrs[keep].reshape(n, k)
    nbr_mean = yhat[nbrs].mean(axis=1)
    return float(1.0 - np.abs(yhat - nbr_mean).mean())


def consistency(model, test_features, sensitive_index: int, k: int = DEFAULT_K, include_self: bool = True) -> float:
    """Consistency of ``model``'s binary labels on the (standardized) test matrix."""
    yhat = model.predict(test_features)
    return consistency_from_predictions(yhat, test_features, sensitive_index, k, include_self)


def _finite_or_none(value):
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class FairnessReport:
    disparate_impact: float
    equal_opportunity: float
    consistency: float
    group_sizes: dict
    k_used: int
    include_self: bool = True

    @property
    def disparate_impact_status(self) -> str:
        if math.isnan(self.disparate_impact):
            return "undefined"
        if math.isinf(self.disparate_impact):
            return "infinite"
        return "ok"

    def to_dict(self) -> dict:
        return {
            "disparate_impact": _finite_or_none(self.disparate_impact),
            "disparate_impact_status": self.disparate_impact_status,
            "equal_opportunity": self.equal_opportunity,
            "consistency": self.consistency,
            "group_sizes": dict(self.group_sizes),
            "k": self.k_used,
            "consistency_neighbourhood": "self-inclusive" if self.include_self else "self-exclusive",
            "consistency_predictions": "binary labels",
        }


def fairness_report(
    predictions, labels, sensitive, features, sensitive_index, k: int = DEFAULT_K, include_self: bool = True
) -> FairnessReport:
    """All three measures from saved predictions and the test matrix they came from."""
    yhat = _binary("predictions", predictions)
    y = _binary("labels", labels)
    a = _binary("sensitive", sensitive)
    sizes = {
        f"a={g},y={c}": int(np.sum((a == g) & (y == c))) for g in (0, 1) for c in (0, 1)
    }
    return FairnessReport(
        disparate_impact=disparate_impact(yhat, a),
        equal_opportunity=equal_opportunity(yhat, y, a),
        consistency=consistency_from_predictions(yhat, features, sensitive_index, k, include_self),
        group_sizes=sizes,
        k_used=k,
        include_self=include_self,
    )
