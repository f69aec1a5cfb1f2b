"""Classifiers: linear SVM, random forest, gradient boosting, plus the
AdaBoost weak-learner demonstration."""

from __future__ import annotations

import json

import numpy as np

from .adaboost import DegenerateError, WeakClassifierPool, adaboost_demo, make_pool
from .boosting import BoostedModel, train_gradient_boosting
from .config import DimensionMismatch, EmptyDataset, TrainConfig, derive_seed, make_rng
from .forest import ForestModel, train_random_forest
from .svm import LinearSvmModel, NotStandardized, train_linear_svm
from .tree import TreeModel, train_decision_tree

MODEL_FORMAT_VERSION = 1

TRAINERS = {
    "svm": train_linear_svm,
    "forest": train_random_forest,
    "boosting": train_gradient_boosting,
}
_MODEL_TYPES = {"svm": LinearSvmModel, "forest": ForestModel, "boosting": BoostedModel}


def train(kind: str, X, y, config: TrainConfig | None = None):
    try:
        trainer = TRAINERS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None
    return trainer(X, y, config)


def predict(model, vector) -> tuple:
    """Label and score for one feature vector.

    Tree ensembles score with a probability in [0, 1] and threshold at 0.5;
    the SVM scores with w.x + b and thresholds at 0. Exact ties go to
    ``config.tie_label`` (benign by default).
    """
    x = np.asarray(vector, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.n_features:
        raise DimensionMismatch(f"expected a vector of {model.n_features} features")
    score = float(model.decision_function(x.reshape(1, -1))[0])
    label = int(model.predict(x.reshape(1, -1))[0])
    return label, score


def feature_importance(model, names=None) -> list:
    """``(feature, weight)`` pairs, largest first; ties keep feature order."""
    imp = np.asarray(model.feature_importance(), dtype=np.float64)
    order = sorted(range(len(imp)), key=lambda i: (-imp[i], i))
    return [((names[i] if names is not None else i), float(imp[i])) for i in order]


def model_to_dict(model) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "model": model.to_dict(),
    }


def model_from_dict(d: dict):
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {d.get('format_version')!r}")
    config = TrainConfig.from_dict(d["config"])
    return _MODEL_TYPES[d["kind"]].from_dict(d["model"], config)


def save_model(model, path, extra: dict | None = None) -> None:
    doc = model_to_dict(model)
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


__all__ = [
    "BoostedModel", "DegenerateError", "DimensionMismatch", "EmptyDataset",
    "ForestModel", "LinearSvmModel", "NotStandardized", "TRAINERS", "TrainConfig",
    "TreeModel", "WeakClassifierPool", "adaboost_demo", "derive_seed",
    "feature_importance", "load_model", "make_pool", "make_rng", "model_from_dict",
    "model_to_dict", "predict", "save_model", "train", "train_decision_tree",
    "train_gradient_boosting", "train_linear_svm", "train_random_forest",
]
