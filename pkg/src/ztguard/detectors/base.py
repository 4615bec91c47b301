from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from ..flowdata import NormParams

SCHEMA_VERSION = 1

_KINDS: dict[str, type[TrainedModel]] = {}


class SchemaVersionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Common surface of the five classifiers.

    ``scores`` takes rows already scaled with ``norm`` and returns the
    Attack-class score in [0, 1] for each row.
    """

    feature_names: tuple[str, ...] = field(kw_only=True, default=())
    norm: NormParams | None = field(kw_only=True, default=None)

    kind: ClassVar[str] = ""
    display_name: ClassVar[str] = ""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.kind:
            _KINDS[cls.kind] = cls

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_rows(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.feature_names and X.shape[1] != self.n_features:
            raise ValueError(f"{self.kind} model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def params_dict(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_params(cls, params: dict, **shared) -> TrainedModel:
        raise NotImplementedError

    def with_metadata(self, feature_names, norm: NormParams | None) -> TrainedModel:
        return type(self).from_params(self.params_dict(), feature_names=tuple(feature_names), norm=norm)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "norm": self.norm.to_dict() if self.norm else None,
            "params": self.params_dict(),
        }


def model_from_dict(doc: dict) -> TrainedModel:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"model schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}") from None
    norm = NormParams.from_dict(doc["norm"]) if doc.get("norm") else None
    return cls.from_params(doc["params"], feature_names=tuple(doc["feature_names"]), norm=norm)


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def model_kinds() -> list[str]:
    return list(_KINDS)


def model_class(kind: str) -> type[TrainedModel]:
    return _KINDS[kind]


def require_both_classes(labels: np.ndarray) -> None:
    if len(np.unique(labels)) < 2:
        raise ValueError("training data must contain both classes")
