"""Linear maximum-margin classification and cross-validated evaluation.

The trainer minimizes the L2-regularized hinge objective

    J(w, b) = 0.5 ||w||^2 + C * sum_n max(0, 1 - y_n (w.x_n + b))

with an unregularized bias and labels y in {-1 Healthy, +1 Depressed}.
Dimension is tiny (K <= 25), so a deterministic batch subgradient method
with a Polyak-style adaptive step is sufficient and dependency-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eventlog import Label
from .features import FeatureVector, standardize

SVM_MAX_ITER = 10_000


@dataclass(frozen=True)
class LinearSVM:
    weights: np.ndarray
    bias: float
    C: float

    def decision(self, points: np.ndarray) -> np.ndarray:
        return points @ self.weights + self.bias

    def predict(self, points: np.ndarray) -> np.ndarray:
        """+1 (Depressed) where the decision score is >= 0, else -1."""
        return np.where(self.decision(points) >= 0.0, 1, -1)


def svm_objective(
    weights: np.ndarray, bias: float, points: np.ndarray, targets: np.ndarray, C: float
) -> float:
    margins = targets * (points @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * float(weights @ weights) + C * float(hinge.sum())


def _subgradient(
    weights: np.ndarray, bias: float, points: np.ndarray, targets: np.ndarray, C: float
) -> tuple[np.ndarray, float]:
    margins = targets * (points @ weights + bias)
    active = margins < 1.0
    grad_w = weights - C * (targets[active] @ points[active])
    grad_b = -C * float(targets[active].sum())
    return grad_w, grad_b


def train_svm(
    points: np.ndarray,
    targets: np.ndarray,
    C: float,
    seed: int = 0,
    *,
    max_iter: int = SVM_MAX_ITER,
) -> LinearSVM:
    """Deterministic batch subgradient descent from the origin.

    Polyak-style step (f - f_target) / ||g||^2 against an adaptive target
    level f_best - delta; delta halves whenever progress stalls.  The best
    iterate is returned, so the objective never exceeds the origin's C*n.
    """
    del seed  # iterates are deterministic from the zero start
    points = np.asarray(points, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if set(np.unique(targets)) != {-1.0, 1.0}:
        raise ValueError("degenerate training fold: need both classes")

    weights = np.zeros(points.shape[1])
    bias = 0.0
    best_w, best_b = weights.copy(), bias
    best_obj = svm_objective(weights, bias, points, targets, C)

    delta = 0.5 * max(1.0, best_obj)
    check_every = 100
    obj_at_last_check = best_obj
    for iteration in range(1, max_iter + 1):
        obj = svm_objective(weights, bias, points, targets, C)
        if obj < best_obj:
            best_obj = obj
            best_w, best_b = weights.copy(), bias
        grad_w, grad_b = _subgradient(weights, bias, points, targets, C)
        grad_sq = float(grad_w @ grad_w) + grad_b * grad_b
        if grad_sq == 0.0:
            break
        step = (obj - (best_obj - delta)) / grad_sq
        weights = weights - step * grad_w
        bias = bias - step * grad_b

        if iteration % check_every == 0:
            if obj_at_last_check - best_obj < 0.25 * delta:
                delta *= 0.5
            obj_at_last_check = best_obj
            if delta < 1e-10 * max(1.0, best_obj):
                break

    return LinearSVM(weights=best_w, bias=float(best_b), C=float(C))


@dataclass(frozen=True)
class MetricsSlice:
    """Per-class and support-weighted metrics for one evaluation."""

    precision_depressed: float
    recall_depressed: float
    f1_depressed: float
    precision_healthy: float
    recall_healthy: float
    f1_healthy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    auc: float
    support_depressed: int
    support_healthy: int

    def to_dict(self) -> dict:
        return {
            "precision_depressed": self.precision_depressed,
            "recall_depressed": self.recall_depressed,
            "f1_depressed": self.f1_depressed,
            "precision_healthy": self.precision_healthy,
            "recall_healthy": self.recall_healthy,
            "f1_healthy": self.f1_healthy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "auc": self.auc,
            "support_depressed": self.support_depressed,
            "support_healthy": self.support_healthy,
        }


METRIC_KEYS = [
    "precision_depressed", "recall_depressed", "f1_depressed",
    "precision_healthy", "recall_healthy", "f1_healthy",
    "weighted_precision", "weighted_recall", "weighted_f1", "auc",
]


@dataclass
class EvalReport:
    """Per-fold metric slices plus mean and sample stdev across folds."""

    per_fold: list[MetricsSlice]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.per_fold and not self.mean:
            for key in METRIC_KEYS:
                vals = np.array([getattr(s, key) for s in self.per_fold])
                self.mean[key] = float(vals.mean())
                self.std[key] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def auc_score(scores: np.ndarray, truth: np.ndarray) -> float:
    """Probability a positive outscores a negative, ties half-credited.

    Computed from midranks; identical to brute-force pair counting.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    positives = truth == 1
    n_pos = int(positives.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one example of each class")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(truth.size, dtype=np.float64)
    sorted_scores = scores[order]
    idx = 0
    while idx < truth.size:
        end = idx
        while end + 1 < truth.size and sorted_scores[end + 1] == sorted_scores[idx]:
            end += 1
        ranks[order[idx : end + 1]] = 0.5 * (idx + end) + 1.0  # midrank, 1-based
        idx = end + 1
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def metrics(
    predictions: np.ndarray, scores: np.ndarray, truth: np.ndarray
) -> MetricsSlice:
    """Per-class precision/recall/F1, support-weighted averages, and AUC.

    Labels are +1 (Depressed) / -1 (Healthy); 0/0 ratios are defined as 0.
    """
    predictions = np.asarray(predictions)
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if (
        not predictions.size
        or predictions.shape != scores.shape
        or scores.shape != truth.shape
    ):
        raise ValueError("predictions, scores, and truth must share a length >= 1")

    tp_d = int(np.sum((predictions == 1) & (truth == 1)))
    fp_d = int(np.sum((predictions == 1) & (truth == -1)))
    fn_d = int(np.sum((predictions == -1) & (truth == 1)))
    tn_d = int(np.sum((predictions == -1) & (truth == -1)))

    p_d, r_d, f_d = _prf(tp_d, fp_d, fn_d)
    p_h, r_h, f_h = _prf(tn_d, fn_d, fp_d)

    support_d = tp_d + fn_d
    support_h = tn_d + fp_d
    total = support_d + support_h

    def weighted(value_d: float, value_h: float) -> float:
        return (support_d * value_d + support_h * value_h) / total

    return MetricsSlice(
        precision_depressed=p_d, recall_depressed=r_d, f1_depressed=f_d,
        precision_healthy=p_h, recall_healthy=r_h, f1_healthy=f_h,
        weighted_precision=weighted(p_d, p_h),
        weighted_recall=weighted(r_d, r_h),
        weighted_f1=weighted(f_d, f_h),
        auc=auc_score(scores, truth),
        support_depressed=support_d,
        support_healthy=support_h,
    )


def stratified_folds(
    labels: np.ndarray, n_folds: int, seed: int
) -> list[np.ndarray]:
    """Index arrays per fold; class proportions within one example of even."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls in (1, -1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise ValueError(
                f"class {cls} has {idx.size} examples; need >= {n_folds} folds"
            )
        rng.shuffle(idx)
        for pos, item in enumerate(idx):
            folds[pos % n_folds].append(int(item))
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def _label_targets(features: list[FeatureVector]) -> np.ndarray:
    return np.array(
        [1 if f.label is Label.DEPRESSED else -1 for f in features], dtype=np.int64
    )


def cross_validate(
    features: list[FeatureVector],
    C: float,
    folds: int = 5,
    seed: int = 0,
    *,
    scale: bool = True,
) -> EvalReport:
    """Stratified k-fold: standardize on train, fit, score the held-out fold."""
    targets = _label_targets(features)
    fold_indices = stratified_folds(targets, folds, seed)
    slices: list[MetricsSlice] = []
    for held_out in fold_indices:
        mask = np.zeros(len(features), dtype=bool)
        mask[held_out] = True
        train_items = [f for f, m in zip(features, mask) if not m]
        test_items = [f for f, m in zip(features, mask) if m]
        if scale:
            train_items, test_items, _, _ = standardize(train_items, test_items)
        train_x = np.stack([f.values for f in train_items])
        train_y = _label_targets(train_items)
        test_x = np.stack([f.values for f in test_items])
        test_y = _label_targets(test_items)
        model = train_svm(train_x, train_y, C, seed=seed)
        scores = model.decision(test_x)
        slices.append(metrics(model.predict(test_x), scores, test_y))
    return EvalReport(per_fold=slices)
