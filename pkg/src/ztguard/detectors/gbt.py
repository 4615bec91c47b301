from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..flowdata import Dataset
from .base import TrainedModel, require_both_classes
from .tree import DecisionTree, grow_booster


@dataclass(frozen=True)
class GbtParams:
    """Boosting hyperparameters.

    The per-tree penalty is ``gamma * n_leaves + lam/2 * sum(w^2)``.
    """

    rounds: int = 50
    eta: float = 0.3
    gamma: float = 0.0
    lam: float = 1.0
    max_depth: int = 6

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


def sigmoid(z):
    return expit(np.asarray(z, dtype=float))


def logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    """Mean log-loss of labels ``y`` at raw margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass(frozen=True, eq=False)
class GbtModel(TrainedModel):
    trees: tuple[DecisionTree, ...]
    eta: float
    gamma: float
    lam: float
    base_score: float
    loss_history: tuple[float, ...] = ()

    kind = "gbt"
    display_name = "XGBoost-style GBT"

    def margin(self, X) -> np.ndarray:
        X = self.check_rows(X)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.eta * tree.leaf_values(X)[:, 0]
        return out

    def scores(self, X) -> np.ndarray:
        return sigmoid(self.margin(X))

    def params_dict(self) -> dict:
        return {
            "eta": self.eta,
            "gamma": self.gamma,
            "lam": self.lam,
            "base_score": self.base_score,
            "loss_history": list(self.loss_history),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_params(cls, params, **shared):
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in params["trees"]),
            eta=float(params["eta"]),
            gamma=float(params["gamma"]),
            lam=float(params["lam"]),
            base_score=float(params["base_score"]),
            loss_history=tuple(params.get("loss_history", ())),
            **shared,
        )


def train_gbt(train: Dataset, p: GbtParams = GbtParams(), **shared) -> GbtModel:
    """Second-order boosting on the logistic loss with exact greedy splits.

    Starts from the log-odds of the training attack rate; ``loss_history``
    holds the mean training loss before the first round and after each one.
    """
    require_both_classes(train.labels)
    X, y = train.rows, train.labels.astype(float)
    rate = float(y.mean())
    base = math.log(rate / (1.0 - rate))
    margin = np.full(len(y), base)
    history = [logistic_loss(margin, y)]
    trees = []
    for _ in range(p.rounds):
        prob = sigmoid(margin)
        grad = prob - y
        hess = prob * (1.0 - prob)
        tree = grow_booster(X, grad, hess, p.max_depth, p.lam, p.gamma)
        trees.append(tree)
        margin = margin + p.eta * tree.leaf_values(X)[:, 0]
        history.append(logistic_loss(margin, y))
    shared.setdefault("feature_names", train.feature_names)
    return GbtModel(tuple(trees), p.eta, p.gamma, p.lam, base, tuple(history), **shared)
