"""Confusion-matrix metrics, ROC curves with trapezoidal AUC, and the comparison report."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predicted: Sequence[int], actual: Sequence[int]) -> ConfusionMatrix:
    pred = np.asarray(predicted).astype(bool)
    act = np.asarray(actual).astype(bool)
    if pred.shape != act.shape:
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(act)} labels")
    if pred.size == 0:
        raise ValueError("confusion needs at least one example")
    return ConfusionMatrix(
        tp=int(np.sum(pred & act)),
        tn=int(np.sum(~pred & ~act)),
        fp=int(np.sum(pred & ~act)),
        fn=int(np.sum(~pred & act)),
    )


def compute_metrics(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1); zero-denominator ratios are reported as 0."""
    if cm.total < 1:
        raise ValueError("metrics need at least one example")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); one division keeps the result correctly rounded
    f1 = 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn) if cm.tp else 0.0
    return accuracy, precision, recall, f1


@dataclass(frozen=True)
class RocCurve:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.fpr) == len(self.tpr) == len(self.thresholds)):
            raise ValueError("ROC arrays must have equal length")
        if (self.fpr[0], self.tpr[0]) != (0.0, 0.0) or (self.fpr[-1], self.tpr[-1]) != (1.0, 1.0):
            raise ValueError("ROC curve must run from (0,0) to (1,1)")
        if np.any(np.diff(self.fpr) < 0) or np.any(np.diff(self.tpr) < 0):
            raise ValueError("ROC coordinates must be non-decreasing")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr))


def roc_curve(scores: Sequence[float], actual: Sequence[int]) -> RocCurve:
    """Sweep the threshold over +inf and each distinct score, highest first.

    A row counts as positive when ``score >= threshold``, so tied scores
    enter the curve together in one step.
    """
    scores = np.asarray(scores, dtype=float)
    act = np.asarray(actual).astype(bool)
    if scores.shape != act.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(act.sum())
    n_neg = len(act) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes in the labels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(act[order])
    fp = np.cumsum(~act[order])
    # last index of each tie group
    ends = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    thresholds = np.r_[np.inf, s[ends]]
    return RocCurve(tuple(fpr.tolist()), tuple(tpr.tolist()), tuple(thresholds.tolist()))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under TPR(FPR)."""
    area = 0.0
    for i in range(1, len(curve.fpr)):
        area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0
    return min(max(area, 0.0), 1.0)


def roc_auc(scores: Sequence[float], actual: Sequence[int]) -> float:
    return auc(roc_curve(scores, actual))


# --------------------------------------------------------------------------
# report

COLUMNS = ("Accuracy", "Precision", "Recall", "F1 Score", "AUC")
CSV_HEADER = ("model", "accuracy", "precision", "recall", "f1", "auc")
ROC_HEADER = ("threshold", "fpr", "tpr")


class ReportError(ValueError):
    def __init__(self, model: str, cause: Exception):
        super().__init__(f"{model}: {cause}")
        self.model = model


@dataclass(frozen=True)
class MetricsRow:
    model: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float

    def __post_init__(self):
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {v} outside [0, 1]")

    @property
    def values(self) -> tuple[float, float, float, float, float]:
        return (self.accuracy, self.precision, self.recall, self.f1, self.auc)

    def percentages(self) -> list[str]:
        return [f"{100.0 * v:.2f}" for v in self.values]


@dataclass
class Report:
    rows: list[MetricsRow]
    curves: dict[str, RocCurve]

    def to_text(self) -> str:
        return render_table(self.rows)

    def to_csv(self) -> str:
        return render_csv(self.rows)

    def write(self, out_dir, slugs: dict[str, str] | None = None) -> None:
        """Write report.txt, report.csv and one roc_<slug>.csv per model."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text(), encoding="utf-8")
        (out / "report.csv").write_text(self.to_csv(), encoding="utf-8")
        for name, curve in self.curves.items():
            slug = (slugs or {}).get(name, name)
            (out / f"roc_{slug}.csv").write_text(render_roc(curve), encoding="utf-8")


def metrics_row(name: str, scores, predictions, actual) -> MetricsRow:
    acc, prec, rec, f1 = compute_metrics(confusion(predictions, actual))
    return MetricsRow(name, acc, prec, rec, f1, roc_auc(scores, actual))


def report(entries: Sequence[tuple[str, Sequence[float], Sequence[int], Sequence[int]]]) -> Report:
    """One MetricsRow and ROC curve per ``(model name, scores, predictions, actual)`` entry."""
    rows, curves = [], {}
    for name, scores, predictions, actual in entries:
        try:
            if not (len(scores) == len(predictions) == len(actual)):
                raise ValueError("scores, predictions and labels differ in length")
            curve = roc_curve(scores, actual)
            acc, prec, rec, f1 = compute_metrics(confusion(predictions, actual))
            rows.append(MetricsRow(name, acc, prec, rec, f1, auc(curve)))
            curves[name] = curve
        except ValueError as exc:
            raise ReportError(name, exc) from exc
    return Report(rows, curves)


def render_table(rows: Sequence[MetricsRow]) -> str:
    """Aligned plain-text table, metrics as percentages with two decimals."""
    name_w = max([len("Model")] + [len(r.model) for r in rows])
    widths = [max(len(c), 6) for c in COLUMNS]
    lines = ["  ".join(["Model".ljust(name_w)] + [c.rjust(w) for c, w in zip(COLUMNS, widths)])]
    for r in rows:
        lines.append("  ".join([r.model.ljust(name_w)] + [v.rjust(w) for v, w in zip(r.percentages(), widths)]))
    return "\n".join(lines) + "\n"


def render_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.model] + r.percentages())
    return buf.getvalue()


def render_roc(curve: RocCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROC_HEADER)
    for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
        w.writerow(["inf" if t == float("inf") else repr(t), repr(x), repr(y)])
    return buf.getvalue()
