from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from ..flowdata import Dataset
from .base import TrainedModel, require_both_classes


@dataclass(frozen=True)
class KnnParams:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"vector lengths differ: {len(a)} vs {len(b)}")
    acc = 0.0
    for x, y in zip(a, b):
        d = float(x) - float(y)
        acc += d * d
    return math.sqrt(acc)


def pairwise_distances(queries: np.ndarray, stored: np.ndarray) -> np.ndarray:
    """Distances accumulated feature by feature, in the same order as euclidean_distance."""
    acc = np.zeros((len(queries), len(stored)))
    for j in range(stored.shape[1]):
        diff = queries[:, j][:, None] - stored[:, j][None, :]
        acc += diff * diff
    return np.sqrt(acc)


@dataclass(frozen=True, eq=False)
class KnnModel(TrainedModel):
    """Brute-force exact k-nearest-neighbour vote over the stored training rows.

    Neighbours at equal distance are ranked by stored index. With an even
    ``k`` a vote split evenly between the classes goes to Benign, so for
    even ``k`` the label is ``score > 0.5`` rather than ``score >= 0.5``.
    """

    rows: np.ndarray
    labels: np.ndarray
    k: int

    kind = "knn"
    display_name = "KNN"

    chunk: ClassVar[int] = 256

    def __post_init__(self):
        if not 1 <= self.k <= len(self.labels):
            raise ValueError(f"k={self.k} must lie in [1, {len(self.labels)}]")

    def neighbors(self, X) -> np.ndarray:
        X = self.check_rows(X)
        out = np.empty((len(X), self.k), dtype=np.int64)
        for start in range(0, len(X), self.chunk):
            dist = pairwise_distances(X[start : start + self.chunk], self.rows)
            out[start : start + self.chunk] = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return out

    def scores(self, X) -> np.ndarray:
        return self.labels[self.neighbors(X)].mean(axis=1)

    def predict_labels(self, X) -> np.ndarray:
        attack = self.labels[self.neighbors(X)].sum(axis=1)
        return (2 * attack > self.k).astype(np.int64)

    def params_dict(self) -> dict:
        return {"k": self.k, "rows": self.rows.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_params(cls, params, **shared):
        rows = np.asarray(params["rows"], dtype=float)
        return cls(rows=rows.reshape(len(params["labels"]), -1), labels=np.asarray(params["labels"], dtype=np.int64), k=int(params["k"]), **shared)


def train_knn(train: Dataset, p: KnnParams = KnnParams(), **shared) -> KnnModel:
    require_both_classes(train.labels)
    shared.setdefault("feature_names", train.feature_names)
    return KnnModel(rows=train.rows.copy(), labels=train.labels.copy(), k=p.k, **shared)


def predict_knn(model: KnnModel, query: Sequence[float]) -> tuple[int, float]:
    """(label, attack-neighbour fraction) for one query."""
    idx = model.neighbors(np.asarray(query, dtype=float)[None, :])[0]
    votes = model.labels[idx]
    attack = int(votes.sum())
    return int(2 * attack > model.k), attack / model.k
