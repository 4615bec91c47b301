from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..flowdata import Dataset
from .base import TrainedModel, require_both_classes
from .tree import DecisionTree, grow_classifier


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 8
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass(frozen=True, eq=False)
class ForestModel(TrainedModel):
    trees: tuple[DecisionTree, ...]
    max_depth: int | None
    features_per_split: int
    seed: int

    kind = "forest"
    display_name = "Random Forest"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        """Per-tree Attack votes, shape (n_rows, n_trees); leaf count ties vote Benign."""
        X = self.check_rows(X)
        out = np.empty((len(X), len(self.trees)))
        for t, tree in enumerate(self.trees):
            counts = tree.leaf_values(X)
            out[:, t] = counts[:, 1] > counts[:, 0]
        return out

    def scores(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=1)

    def params_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_params(cls, params, **shared):
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in params["trees"]),
            max_depth=params["max_depth"],
            features_per_split=int(params["features_per_split"]),
            seed=int(params["seed"]),
            **shared,
        )


def train_forest(train: Dataset, p: ForestParams = ForestParams(), **shared) -> ForestModel:
    """Bagged Gini trees with a fresh random feature subset drawn at every node."""
    require_both_classes(train.labels)
    n, d = train.rows.shape
    m = p.features_per_split or math.ceil(math.sqrt(d))
    m = min(m, d)
    rng = np.random.default_rng(p.seed)

    def choose():
        return np.sort(rng.choice(d, size=m, replace=False)).tolist()

    trees = []
    for _ in range(p.n_trees):
        sample = rng.integers(0, n, size=n) if p.bootstrap else np.arange(n)
        trees.append(grow_classifier(train.rows[sample], train.labels[sample], p.max_depth, choose))
    shared.setdefault("feature_names", train.feature_names)
    return ForestModel(tuple(trees), p.max_depth, m, p.seed, **shared)
