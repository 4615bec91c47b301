"""Gini impurity, exact greedy split search and array-backed binary trees."""

from __future__ import annotations

from collections.abc import Sequence
from collections import deque
from dataclasses import dataclass

import numpy as np

# Candidate scores within this distance of the optimum count as ties.
TIE_TOL = 1e-12


class ClassCounts(tuple):
    """Per-class non-negative counts, e.g. ``ClassCounts((benign, attack))``."""

    def __new__(cls, counts: Sequence[int]):
        counts = tuple(int(c) for c in counts)
        if any(c < 0 for c in counts):
            raise ValueError("class counts must be non-negative")
        return super().__new__(cls, counts)

    @property
    def total(self) -> int:
        return sum(self)

    @property
    def proportions(self) -> tuple[float, ...]:
        t = self.total
        if t == 0:
            raise ValueError("proportions undefined for an empty node")
        return tuple(c / t for c in self)


def gini(counts: Sequence[int]) -> float:
    """1 - sum(p_i^2) over class proportions."""
    cc = counts if isinstance(counts, ClassCounts) else ClassCounts(counts)
    if cc.total <= 0:
        raise ValueError("gini of an empty node is undefined")
    return 1.0 - sum(p * p for p in cc.proportions)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def _pick(per_feature: list[tuple[int, np.ndarray, np.ndarray]], maximize: bool = True) -> tuple[int, int] | None:
    """Best (feature, candidate) with ties broken by feature then threshold order."""
    best = None
    for _, scores, _ in per_feature:
        if len(scores):
            m = scores.max() if maximize else scores.min()
            best = m if best is None else (max(best, m) if maximize else min(best, m))
    if best is None:
        return None
    for f, scores, _ in per_feature:
        if not len(scores):
            continue
        hit = np.flatnonzero(scores >= best - TIE_TOL) if maximize else np.flatnonzero(scores <= best + TIE_TOL)
        if len(hit):
            return f, int(hit[0])
    return None


def _sorted_candidates(x: np.ndarray):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # boundary after position i when xs[i] < xs[i+1]
    cut = np.flatnonzero(xs[1:] > xs[:-1])
    thresholds = (xs[cut] + xs[cut + 1]) / 2.0
    return order, cut, thresholds


def best_split(rows: np.ndarray, labels: np.ndarray, candidate_features: Sequence[int]) -> Split | None:
    """Gini split minimising weighted child impurity over midpoint thresholds.

    Returns None when no candidate lowers impurity. Rows go left when
    ``x[feature] <= threshold``.
    """
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("best_split needs at least one row")
    n_pos = int(labels.sum())
    parent = gini((n - n_pos, n_pos))
    if parent == 0.0:
        return None

    per_feature = []
    for f in sorted(candidate_features):
        order, cut, thresholds = _sorted_candidates(rows[:, f])
        if not len(cut):
            per_feature.append((f, np.empty(0), thresholds))
            continue
        pos_left = np.cumsum(labels[order])[cut].astype(float)
        n_left = (cut + 1).astype(float)
        n_right = n - n_left
        pos_right = n_pos - pos_left
        # n * weighted gini = n - sum_child sum_class c^2 / n_child
        sq_left = (pos_left**2 + (n_left - pos_left) ** 2) / n_left
        sq_right = (pos_right**2 + (n_right - pos_right) ** 2) / n_right
        child = (n - sq_left - sq_right) / n
        per_feature.append((f, parent - child, thresholds))

    pick = _pick(per_feature, maximize=True)
    if pick is None:
        return None
    f, i = pick
    _, gains, thresholds = next(p for p in per_feature if p[0] == f)
    if gains[i] <= TIE_TOL:
        return None
    return Split(f, float(thresholds[i]), float(gains[i]))


def best_gain_split(
    rows: np.ndarray, grad: np.ndarray, hess: np.ndarray, candidate_features: Sequence[int], lam: float, gamma: float
) -> Split | None:
    """Regularised second-order split used by boosting.

    gain = 1/2 [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma,
    accepted only when positive.
    """
    G = float(grad.sum())
    H = float(hess.sum())
    root = G * G / (H + lam)
    per_feature = []
    for f in sorted(candidate_features):
        order, cut, thresholds = _sorted_candidates(rows[:, f])
        if not len(cut):
            per_feature.append((f, np.empty(0), thresholds))
            continue
        gl = np.cumsum(grad[order])[cut]
        hl = np.cumsum(hess[order])[cut]
        gr = G - gl
        hr = H - hl
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - root) - gamma
        per_feature.append((f, gain, thresholds))
    pick = _pick(per_feature, maximize=True)
    if pick is None:
        return None
    f, i = pick
    _, gains, thresholds = next(p for p in per_feature if p[0] == f)
    if gains[i] <= TIE_TOL:
        return None
    return Split(f, float(thresholds[i]), float(gains[i]))


class DecisionTree:
    """Binary tree stored as parallel arrays.

    Internal nodes have ``feature >= 0``; leaves have ``feature == -1`` and
    carry ``value`` (a leaf vector: class counts for classification trees,
    a single weight for boosting trees).
    """

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        if self.value.ndim == 1:
            self.value = self.value[:, None]
        internal = self.feature >= 0
        if np.any(internal & ((self.left < 0) | (self.right < 0))):
            raise ValueError("internal node missing a child")
        if not np.all(np.isfinite(self.threshold[internal])):
            raise ValueError("non-finite split threshold")

    def __len__(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self), dtype=np.int64)
        for i in range(len(self)):  # children always follow their parent
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if len(self) else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while np.any(active):
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


class _Builder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[list[float]] = []

    def add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(list(value))
        return len(self.feature) - 1

    def make_internal(self, node: int, split: Split, left: int, right: int) -> None:
        self.feature[node] = split.feature
        self.threshold[node] = split.threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> DecisionTree:
        return DecisionTree(self.feature, self.threshold, self.left, self.right, self.value)


def grow_classifier(
    rows: np.ndarray,
    labels: np.ndarray,
    max_depth: int | None,
    choose_features,
    min_samples_split: int = 2,
) -> DecisionTree:
    """Grow a Gini tree breadth-first.

    ``choose_features()`` is called once per node and returns the candidate
    feature indices for that node (the forest draws a fresh subset here).
    Leaves store ``[benign_count, attack_count]``.
    """
    b = _Builder()
    labels = np.asarray(labels)

    def counts(idx):
        pos = int(labels[idx].sum())
        return [len(idx) - pos, pos]

    root_idx = np.arange(len(labels))
    queue = deque([(b.add(counts(root_idx)), root_idx, 0)])
    while queue:
        node, idx, depth = queue.popleft()
        if len(idx) < min_samples_split or (max_depth is not None and depth >= max_depth):
            continue
        split = best_split(rows[idx], labels[idx], choose_features())
        if split is None:
            continue
        go_left = rows[idx, split.feature] <= split.threshold
        li, ri = idx[go_left], idx[~go_left]
        left = b.add(counts(li))
        right = b.add(counts(ri))
        b.make_internal(node, split, left, right)
        queue.append((left, li, depth + 1))
        queue.append((right, ri, depth + 1))
    return b.build()


def grow_booster(
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    max_depth: int,
    lam: float,
    gamma: float,
) -> DecisionTree:
    """Grow one boosting tree; each leaf holds the Newton weight -G/(H + lam)."""
    b = _Builder()
    features = list(range(rows.shape[1]))

    def weight(idx):
        return [-float(grad[idx].sum()) / (float(hess[idx].sum()) + lam)]

    root_idx = np.arange(len(grad))
    queue = deque([(b.add(weight(root_idx)), root_idx, 0)])
    while queue:
        node, idx, depth = queue.popleft()
        if len(idx) < 2 or depth >= max_depth:
            continue
        split = best_gain_split(rows[idx], grad[idx], hess[idx], features, lam, gamma)
        if split is None:
            continue
        go_left = rows[idx, split.feature] <= split.threshold
        li, ri = idx[go_left], idx[~go_left]
        left = b.add(weight(li))
        right = b.add(weight(ri))
        b.make_internal(node, split, left, right)
        queue.append((left, li, depth + 1))
        queue.append((right, ri, depth + 1))
    return b.build()
