from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..flowdata import Dataset
from .base import TrainedModel, require_both_classes

VAR_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class GnbModel(TrainedModel):
    """Gaussian naive Bayes over two classes.

    ``means`` and ``variances`` have shape (n_classes, n_features); row 0
    is Benign, row 1 Attack.
    """

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    kind = "gnb"
    display_name = "Naive Bayes"

    def __post_init__(self):
        if abs(float(self.priors.sum()) - 1.0) > 1e-12:
            raise ValueError("class priors must sum to 1")
        if np.any(self.variances < VAR_FLOOR):
            raise ValueError("variances must respect the variance floor")

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self.check_rows(X)
        ll = -0.5 * (
            np.log(2.0 * np.pi * self.variances)[None, :, :]
            + (X[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]
        ).sum(axis=2)
        return ll + np.log(self.priors)[None, :]

    def posteriors(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def scores(self, X) -> np.ndarray:
        return self.posteriors(X)[:, 1]

    def params_dict(self) -> dict:
        return {"priors": self.priors.tolist(), "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_params(cls, params, **shared):
        return cls(
            priors=np.asarray(params["priors"], dtype=float),
            means=np.asarray(params["means"], dtype=float),
            variances=np.asarray(params["variances"], dtype=float),
            **shared,
        )


def train_gnb(train: Dataset, **shared) -> GnbModel:
    require_both_classes(train.labels)
    X, y = train.rows, train.labels
    counts = np.array([(y == c).sum() for c in (0, 1)], dtype=float)
    priors = counts / counts.sum()
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.maximum(np.stack([X[y == c].var(axis=0) for c in (0, 1)]), VAR_FLOOR)
    shared.setdefault("feature_names", train.feature_names)
    return GnbModel(priors=priors, means=means, variances=variances, **shared)
