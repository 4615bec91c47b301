"""Five binary flow classifiers behind one train/predict contract."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ..flowdata import Dataset, fit_normalize, select_features
from .base import (
    SCHEMA_VERSION,
    SchemaVersionError,
    TrainedModel,
    load_model,
    model_class,
    model_from_dict,
    model_kinds,
    save_model,
)
from .forest import ForestModel, ForestParams, train_forest
from .gbt import GbtModel, GbtParams, logistic_loss, sigmoid, train_gbt
from .gnb import VAR_FLOOR, GnbModel, train_gnb
from .knn import (
    KnnModel,
    KnnParams,
    euclidean_distance,
    pairwise_distances,
    predict_knn,
    train_knn,
)
from .sgd import (
    DivergenceError,
    LinearModel,
    SgdParams,
    example_gradient,
    example_loss,
    sgd_step,
    train_sgd,
)
from .tree import (
    ClassCounts,
    DecisionTree,
    Split,
    best_gain_split,
    best_split,
    gini,
    grow_booster,
    grow_classifier,
)

# Report row order: ensembles first, then KNN, SGD and naive Bayes.
MODEL_ORDER = ("gbt", "forest", "knn", "sgd", "gnb")

DEFAULT_PARAMS = {
    "gbt": GbtParams(),
    "forest": ForestParams(),
    "knn": KnnParams(),
    "sgd": SgdParams(),
    "gnb": None,
}


def labels_from_scores(model: TrainedModel, scores: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    scores = np.asarray(scores)
    if isinstance(model, KnnModel) and model.k % 2 == 0 and threshold == 0.5:
        return (scores > 0.5).astype(np.int64)
    return (scores >= threshold).astype(np.int64)


def predict(model: TrainedModel, row: Sequence[float]) -> tuple[int, float]:
    """(label, attack score) for one normalized row; label is Attack iff score >= 0.5."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1 or (model.feature_names and len(row) != model.n_features):
        raise ValueError(f"row has {row.size} features, model expects {model.n_features}")
    score = float(model.scores(row[None, :])[0])
    return int(labels_from_scores(model, np.array([score]))[0]), score


def train(kind: str, train_ds: Dataset, params=None, **shared) -> TrainedModel:
    """Train one model kind on an already prepared (selected, normalized) dataset."""
    if kind not in MODEL_ORDER:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_ORDER)}")
    params = params if params is not None else DEFAULT_PARAMS[kind]
    if kind == "gbt":
        return train_gbt(train_ds, params, **shared)
    if kind == "forest":
        return train_forest(train_ds, params, **shared)
    if kind == "knn":
        return train_knn(train_ds, params, **shared)
    if kind == "sgd":
        return train_sgd(train_ds, params, **shared)
    return train_gnb(train_ds, **shared)


def fit_model(kind: str, raw: Dataset, params=None, threshold: float = 0.05) -> TrainedModel:
    """Feature selection + min-max fit on ``raw`` (training rows only), then train.

    The returned model carries the kept feature names and the scaling
    parameters, so it can score raw feature matrices via :func:`score_raw`.
    """
    selected, kept = select_features(raw, threshold)
    scaled, norm = fit_normalize(selected)
    return train(kind, scaled, params, feature_names=tuple(kept), norm=norm)


def prepare(model: TrainedModel, raw: Dataset) -> np.ndarray:
    """Select the model's features from a raw dataset and scale them."""
    missing = [n for n in model.feature_names if n not in raw.feature_names]
    if missing:
        raise ValueError(f"input lacks model feature(s): {', '.join(missing)}")
    X = raw.columns(model.feature_names).rows
    return model.norm.transform(X) if model.norm else X


def score_raw(model: TrainedModel, raw: Dataset) -> np.ndarray:
    return model.scores(prepare(model, raw))


__all__ = [
    "DEFAULT_PARAMS",
    "MODEL_ORDER",
    "SCHEMA_VERSION",
    "VAR_FLOOR",
    "ClassCounts",
    "DecisionTree",
    "DivergenceError",
    "ForestModel",
    "ForestParams",
    "GbtModel",
    "GbtParams",
    "GnbModel",
    "KnnModel",
    "KnnParams",
    "LinearModel",
    "SchemaVersionError",
    "SgdParams",
    "Split",
    "TrainedModel",
    "best_gain_split",
    "best_split",
    "euclidean_distance",
    "example_gradient",
    "example_loss",
    "fit_model",
    "gini",
    "grow_booster",
    "grow_classifier",
    "labels_from_scores",
    "load_model",
    "logistic_loss",
    "model_class",
    "model_from_dict",
    "model_kinds",
    "pairwise_distances",
    "predict",
    "predict_knn",
    "prepare",
    "save_model",
    "score_raw",
    "sgd_step",
    "sigmoid",
    "train",
    "train_forest",
    "train_gbt",
    "train_gnb",
    "train_knn",
    "train_sgd",
]
