from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..flowdata import Dataset
from .base import TrainedModel, require_both_classes
from .gbt import sigmoid


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"SGD diverged: non-finite loss in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class SgdParams:
    eta: float = 0.01
    epochs: int = 20
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


def _softplus(z: float) -> float:
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def example_loss(theta: np.ndarray, bias: float, x: np.ndarray, y: float, l2: float) -> float:
    """Logistic loss of one example plus (l2/2)*||theta||^2; the bias is not penalised."""
    z = float(theta @ x) + bias
    return _softplus(z) - y * z + 0.5 * l2 * float(theta @ theta)


def example_gradient(theta: np.ndarray, bias: float, x: np.ndarray, y: float, l2: float) -> tuple[np.ndarray, float]:
    """Gradient of :func:`example_loss` with respect to (theta, bias)."""
    err = _sigmoid(float(theta @ x) + bias) - y
    return err * x + l2 * theta, err


def sgd_step(theta, bias, x, y, eta, l2):
    g_theta, g_bias = example_gradient(theta, bias, x, y, l2)
    return theta - eta * g_theta, bias - eta * g_bias


@dataclass(frozen=True, eq=False)
class LinearModel(TrainedModel):
    theta: np.ndarray
    bias: float
    eta: float
    epoch_losses: tuple[float, ...] = ()

    kind = "sgd"
    display_name = "SGD"

    def __post_init__(self):
        if self.feature_names and len(self.theta) != len(self.feature_names):
            raise ValueError("weight vector length must equal the feature count")

    def scores(self, X) -> np.ndarray:
        X = self.check_rows(X)
        return sigmoid(X @ self.theta + self.bias)

    def params_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "bias": self.bias, "eta": self.eta, "epoch_losses": list(self.epoch_losses)}

    @classmethod
    def from_params(cls, params, **shared):
        return cls(
            theta=np.asarray(params["theta"], dtype=float),
            bias=float(params["bias"]),
            eta=float(params["eta"]),
            epoch_losses=tuple(params.get("epoch_losses", ())),
            **shared,
        )


def train_sgd(train: Dataset, p: SgdParams = SgdParams(), **shared) -> LinearModel:
    """Per-example logistic-regression updates, one seeded shuffle per epoch."""
    require_both_classes(train.labels)
    X = train.rows
    y = train.labels.astype(float)
    rng = np.random.default_rng(p.seed)
    theta = np.zeros(X.shape[1])
    bias = 0.0
    losses = []
    for epoch in range(1, p.epochs + 1):
        total = 0.0
        # overflow shows up as a non-finite loss below and raises DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            for i in rng.permutation(len(y)):
                z = float(theta @ X[i]) + bias
                total += _softplus(z) - y[i] * z
                theta, bias = sgd_step(theta, bias, X[i], y[i], p.eta, p.l2)
            loss = total / len(y) + 0.5 * p.l2 * float(theta @ theta)
        if not math.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise DivergenceError(epoch)
        losses.append(loss)
    shared.setdefault("feature_names", train.feature_names)
    return LinearModel(theta=theta, bias=bias, eta=p.eta, epoch_losses=tuple(losses), **shared)
