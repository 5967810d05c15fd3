"""The two-path fairness audit.

One path trains directly on the training split; the other reweighs the
training split first. Both are evaluated on the same test split with the
three fairness measures and with Shapley-based importance measures, and the
two results are compared.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as data_mod
from .data import Dataset, DatasetConfig, StandardizationParams
from .errors import AuditError, ConfigError, DataError, StageError, UndefinedGroupError
from .fairness import DEFAULT_K, FairnessReport, fairness_report
from .models import ClassifierSpec, TrainedModel, train
from .reweigh import ReweighWeights, apply_weights, compute_weights
from .shapley import ExplainerConfig, explain_batch, phi_matrix, select_background

REPORT_SCHEMA = "fairshap.audit_report"
REPORT_VERSION = 1

EQUALITY = "equality_between_groups"
FAVORS_PRIVILEGED = "favors_privileged"
FAVORS_UNPRIVILEGED = "favors_unprivileged"

EPS_DI = 0.05
EPS_EOP = 0.02


@dataclass(frozen=True)
class ExplainerSettings:
    """How the explainer is built for an audit (the background comes from the training split)."""

    background_size: int = 100
    exact_threshold: int = 15
    permutations: int = 200
    method: str = "auto"
    seed: int = 42

    def __post_init__(self):
        if self.background_size < 1 or self.permutations < 1 or self.exact_threshold < 0:
            raise ConfigError("background_size and permutations must be >= 1, exact_threshold >= 0")
        if self.method not in ("auto", "exact", "sampled"):
            raise ConfigError(f"unknown explanation method {self.method!r}")

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- importance


def rank_by_impact(global_impact) -> np.ndarray:
    """1 = largest impact; equal impacts keep feature order."""
    G = np.asarray(global_impact, dtype=float)
    order = np.lexsort((np.arange(len(G)), -G))
    rank = np.empty(len(G), dtype=np.int64)
    rank[order] = np.arange(1, len(G) + 1)
    return rank


@dataclass(frozen=True, eq=False)
class ImportanceSummary:
    feature_names: tuple
    global_impact: np.ndarray
    rank: np.ndarray
    group_diff: np.ndarray
    mean_unprivileged: np.ndarray
    mean_privileged: np.ndarray
    n_unprivileged: int
    n_privileged: int

    def index(self, name: str) -> int:
        return data_mod._column_index(self.feature_names, name)

    def feature(self, name: str) -> dict:
        j = self.index(name)
        return {
            "name": name,
            "global_impact": float(self.global_impact[j]),
            "rank": int(self.rank[j]),
            "group_diff": float(self.group_diff[j]),
            "mean_unprivileged": float(self.mean_unprivileged[j]),
            "mean_privileged": float(self.mean_privileged[j]),
        }

    def to_dict(self, sensitive_name: str | None = None) -> dict:
        doc = {
            "n_unprivileged": self.n_unprivileged,
            "n_privileged": self.n_privileged,
            "features": [self.feature(n) for n in self.feature_names],
        }
        if sensitive_name is not None:
            doc["sensitive"] = self.feature(sensitive_name)
        return doc


def importance_summary(explanations, sensitive, feature_names=None) -> ImportanceSummary:
    """Global impact (mean |phi|), its ranks, and the unprivileged-minus-privileged mean phi.

    ``explanations`` is a list of ``Explanation`` or an (N, M) phi matrix.
    Raises ``UndefinedGroupError`` when a group is empty; its ``partial``
    holds the global impacts and ranks.
    """
    phi = explanations if isinstance(explanations, np.ndarray) else phi_matrix(explanations)
    phi = np.asarray(phi, dtype=float)
    a = np.asarray(sensitive).astype(np.int64)
    if phi.ndim != 2 or phi.shape[0] == 0:
        raise DataError("importance needs a non-empty set of explanations")
    if a.shape != (phi.shape[0],):
        raise DataError("sensitive must have one entry per explanation")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(phi.shape[1]))
    G = np.abs(phi).mean(axis=0)
    rank = rank_by_impact(G)
    n0, n1 = int(np.sum(a == 0)), int(np.sum(a == 1))
    if n0 == 0 or n1 == 0:
        raise UndefinedGroupError(
            "group SHAP difference undefined: one sensitive group has no explained rows",
            partial={"global_impact": G, "rank": rank, "feature_names": names},
        )
    m0 = phi[a == 0].mean(axis=0)
    m1 = phi[a == 1].mean(axis=0)
    return ImportanceSummary(names, G, rank, m0 - m1, m0, m1, n0, n1)


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class ScenarioCall:
    label: str
    evidence: dict

    def to_dict(self):
        return {"label": self.label, "evidence": dict(self.evidence)}


def classify_scenario(disparate_impact: float, equal_opportunity: float, eps_di: float = EPS_DI, eps_eop: float = EPS_EOP) -> ScenarioCall:
    """Label a (reweighed) run's group-fairness outcome.

    Near parity on both measures is equality between groups. Otherwise the
    sign of equal opportunity decides; when it is exactly zero the side of
    disparate impact relative to one decides. An undefined (0/0) disparate
    impact counts as parity.
    """
    di = 1.0 if math.isnan(disparate_impact) else disparate_impact
    eop = equal_opportunity
    if abs(eop) <= eps_eop and abs(di - 1.0) <= eps_di:
        label, rule = EQUALITY, "|EOP| <= eps_eop and |DI - 1| <= eps_di"
    elif eop < 0:
        label, rule = FAVORS_PRIVILEGED, "EOP < 0"
    elif eop > 0:
        label, rule = FAVORS_UNPRIVILEGED, "EOP > 0"
    elif di > 1.0:
        label, rule = FAVORS_UNPRIVILEGED, "EOP = 0 and DI > 1"
    else:
        label, rule = FAVORS_PRIVILEGED, "EOP = 0 and DI < 1"
    evidence = {
        "disparate_impact": disparate_impact if math.isfinite(disparate_impact) else None,
        "equal_opportunity": eop,
        "eps_di": eps_di,
        "eps_eop": eps_eop,
        "rule": rule,
    }
    return ScenarioCall(label, evidence)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True, eq=False)
class PreparedData:
    train_raw: Dataset
    test_raw: Dataset
    standardizer: StandardizationParams
    train: Dataset
    test: Dataset
    dropped_missing: int = 0


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except AuditError as exc:
        raise StageError(name, exc) from exc


def prepare_data(config: DatasetConfig) -> PreparedData:
    table = _stage("load", data_mod.load_dataset, config)
    full = _stage("encode", data_mod.encode, table, config)
    train_raw, test_raw = _stage("split", data_mod.split, full, config.split_fraction, config.seed)
    params = _stage("standardize", data_mod.fit_standardizer, train_raw)
    return PreparedData(
        train_raw,
        test_raw,
        params,
        data_mod.apply_standardizer(params, train_raw),
        data_mod.apply_standardizer(params, test_raw),
        table.dropped_missing,
    )


@dataclass(eq=False)
class AuditRun:
    reweighed: bool
    fairness: FairnessReport
    importance: ImportanceSummary
    model: TrainedModel
    explanations: list
    predictions: np.ndarray
    probabilities: np.ndarray
    prepared: PreparedData
    weights: ReweighWeights | None
    metadata: dict = field(default_factory=dict)

    @property
    def test(self) -> Dataset:
        return self.prepared.test

    @property
    def sensitive_name(self) -> str:
        return self.prepared.test.sensitive_name

    def to_dict(self) -> dict:
        methods = sorted({e.method for e in self.explanations})
        return {
            "reweighed": self.reweighed,
            "fairness": self.fairness.to_dict(),
            "importance": self.importance.to_dict(self.sensitive_name),
            "explanation_methods": methods,
            "n_test": int(self.test.n_rows),
            "n_train": int(self.prepared.train.n_rows),
            "test_accuracy": float(np.mean(self.predictions == self.test.target)),
        }


def run_audit(
    dataset_config: DatasetConfig,
    classifier_spec: ClassifierSpec,
    explainer_settings: ExplainerSettings | None = None,
    with_reweigh: bool = False,
    k: int = DEFAULT_K,
    include_self: bool = True,
    prepared: PreparedData | None = None,
) -> AuditRun:
    """encode -> split -> standardize -> (reweigh) -> train -> fairness -> explain -> importance."""
    settings = explainer_settings or ExplainerSettings()
    if prepared is None:
        prepared = prepare_data(dataset_config)
    train_set = prepared.train
    weights = None
    if with_reweigh:
        weights = _stage("reweigh", compute_weights, train_set)
        train_set = apply_weights(train_set, weights)
    model = _stage(
        "train", train, classifier_spec, train_set.features, train_set.target, train_set.weights
    )
    test = prepared.test
    probabilities = _stage("predict", model.predict_proba, test.features)
    predictions = (probabilities >= 0.5).astype(np.int64)
    report = _stage(
        "fairness",
        fairness_report,
        predictions,
        test.target,
        test.sensitive,
        test.features,
        test.sensitive_index,
        k,
        include_self,
    )
    background = select_background(prepared.train.features, settings.background_size, settings.seed)
    config = _stage(
        "explain",
        ExplainerConfig,
        background,
        settings.exact_threshold,
        settings.permutations,
        settings.seed,
    )
    explanations = _stage("explain", explain_batch, model, test.features, config, settings.method)
    importance = _stage(
        "importance", importance_summary, explanations, test.sensitive, test.feature_names
    )
    metadata = {
        "dataset": dataset_config.to_dict(),
        "classifier": classifier_spec.to_dict(),
        "explainer": settings.to_dict(),
        "k": k,
        "include_self": include_self,
    }
    return AuditRun(
        with_reweigh,
        report,
        importance,
        model,
        explanations,
        predictions,
        probabilities,
        prepared,
        weights,
        metadata,
    )


# ---------------------------------------------------------------- comparison


def _delta(after, before):
    if after is None or before is None or not (math.isfinite(after) and math.isfinite(before)):
        return None
    return after - before


@dataclass(eq=False)
class AuditComparison:
    baseline: AuditRun
    reweighed: AuditRun
    deltas: dict
    scenario: ScenarioCall


def compare(baseline: AuditRun, reweighed: AuditRun, eps_di: float = EPS_DI, eps_eop: float = EPS_EOP) -> AuditComparison:
    """Deltas are ``reweighed - baseline``; the scenario is read off the reweighed run."""
    if baseline.metadata != reweighed.metadata:
        raise ConfigError("runs differ in dataset, classifier or explainer configuration")
    s = baseline.sensitive_name
    b_imp, r_imp = baseline.importance.feature(s), reweighed.importance.feature(s)
    fb, fr = baseline.fairness, reweighed.fairness
    deltas = {
        "disparate_impact": _delta(fr.disparate_impact, fb.disparate_impact),
        "equal_opportunity": fr.equal_opportunity - fb.equal_opportunity,
        "consistency": fr.consistency - fb.consistency,
        "sensitive_group_diff": r_imp["group_diff"] - b_imp["group_diff"],
        "sensitive_global_impact": r_imp["global_impact"] - b_imp["global_impact"],
        "sensitive_rank": r_imp["rank"] - b_imp["rank"],
    }
    scenario = classify_scenario(fr.disparate_impact, fr.equal_opportunity, eps_di, eps_eop)
    return AuditComparison(baseline, reweighed, deltas, scenario)


def build_report(baseline: AuditRun | None = None, reweighed: AuditRun | None = None, comparison: AuditComparison | None = None) -> dict:
    """The ``audit_report.json`` document for one or both paths."""
    if comparison is not None:
        baseline, reweighed = comparison.baseline, comparison.reweighed
    runs = {name: run for name, run in (("baseline", baseline), ("reweighed", reweighed)) if run is not None}
    if not runs:
        raise ValueError("nothing to report")
    first = next(iter(runs.values()))
    prepared = first.prepared
    doc = {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        **first.metadata,
        "feature_names": list(prepared.test.feature_names),
        "sensitive_feature": first.sensitive_name,
        "rows_dropped_missing": prepared.dropped_missing,
        "runs": {name: run.to_dict() for name, run in runs.items()},
    }
    if reweighed is not None and reweighed.weights is not None:
        doc["reweighing"] = reweighed.weights.to_dict()
    if comparison is not None:
        doc["deltas"] = comparison.deltas
        doc["scenario"] = comparison.scenario.to_dict()
    return doc


def report_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------- plot data


def dependence_table(explanations, features, feature_names, feature: str, color_feature: str | None = None) -> dict:
    """Columns for a dependence plot: feature value, its phi, optional colouring value."""
    phi = explanations if isinstance(explanations, np.ndarray) else phi_matrix(explanations)
    X = np.asarray(features, dtype=float)
    j = data_mod._column_index(feature_names, feature)
    table = {"value": X[:, j].copy(), "phi": phi[:, j].copy()}
    if color_feature is not None:
        c = data_mod._column_index(feature_names, color_feature)
        table["color"] = X[:, c].copy()
    return table


def summary_table(explanations, features, feature_names) -> list[tuple]:
    """Rows ``(rank, feature, global_impact, instance, phi, value)`` ordered by rank then instance."""
    phi = explanations if isinstance(explanations, np.ndarray) else phi_matrix(explanations)
    X = np.asarray(features, dtype=float)
    G = np.abs(phi).mean(axis=0)
    rank = rank_by_impact(G)
    rows = []
    for j in np.argsort(rank, kind="stable"):
        for i in range(phi.shape[0]):
            rows.append((int(rank[j]), feature_names[j], float(G[j]), i, float(phi[i, j]), float(X[i, j])))
    return rows


def write_dependence_csv(path, table: dict, feature: str, color_feature: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [feature, f"phi[{feature}]"]
        if "color" in table:
            header.append(color_feature or "color")
        writer.writerow(header)
        cols = [table["value"], table["phi"]] + ([table["color"]] if "color" in table else [])
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature", "global_impact", "instance", "phi", "value"])
        for rank, name, g, i, p, v in rows:
            writer.writerow([rank, name, repr(g), i, repr(p), repr(v)])
