from .classifiers import (
    THRESHOLD,
    ClassifierSpec,
    GradientBoostingModel,
    LogisticModel,
    RandomForestModel,
    TrainedModel,
    predict,
    predict_proba,
    train,
)
from .knn import KnnIndex, knn_query
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .tree import Tree, build_tree

__all__ = [
    "THRESHOLD",
    "ClassifierSpec",
    "GradientBoostingModel",
    "KnnIndex",
    "LogisticModel",
    "RandomForestModel",
    "TrainedModel",
    "Tree",
    "build_tree",
    "knn_query",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "predict_proba",
    "save_model",
    "train",
]
