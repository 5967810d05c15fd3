"""Versioned JSON documents for trained models (``model.json``)."""

from __future__ import annotations

import json

from ..errors import ModelError
from .classifiers import (
    ClassifierSpec,
    GradientBoostingModel,
    LogisticModel,
    RandomForestModel,
    TrainedModel,
)

FORMAT = "fairshap.model"
VERSION = 1


def model_to_dict(model: TrainedModel, extra: dict | None = None) -> dict:
    """``extra`` carries pipeline context (feature names, standardizer, seeds)."""
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "spec": model.spec.to_dict(),
        "feature_count": model.feature_count,
        "params": model.params_dict(),
    }
    if extra:
        doc["pipeline"] = extra
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != FORMAT:
        raise ModelError("not a fairshap model document")
    if doc.get("version") != VERSION:
        raise ModelError(f"unsupported model document version {doc.get('version')!r}")
    try:
        spec = ClassifierSpec.from_dict(doc["spec"])
        params = doc["params"]
        m = int(doc["feature_count"])
        if spec.kind == "logistic_regression":
            model = LogisticModel.from_params(spec, params)
        elif spec.kind == "random_forest":
            model = RandomForestModel.from_params(spec, params, m)
        else:
            model = GradientBoostingModel.from_params(spec, params, m)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model document: {exc}") from None
    if model.feature_count != m:
        raise ModelError("feature_count does not match the stored parameters")
    return model


def dumps(model: TrainedModel, extra: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, extra), sort_keys=True, indent=1)


def save_model(model: TrainedModel, path: str, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model, extra))
        fh.write("\n")


def load_model(path: str) -> tuple[TrainedModel, dict]:
    """Return the model and its pipeline context (empty if none was stored)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from None
    return model_from_dict(doc), doc.get("pipeline", {})
