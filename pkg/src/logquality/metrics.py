"""Classification metrics (macro P/R/F1, specificity, one-vs-rest AUC) and error@k."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class MetricSuite:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    specificity: float | None = None
    per_class: list[dict] = field(default_factory=list)
    confusion: list[list[int]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(labels, predictions, n_classes: int) -> np.ndarray:
    """``cm[t, p]`` counts samples with true class ``t`` predicted as ``p``."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return cm


def _ratio(num: float, den: float, what: str, warnings: list) -> float:
    if den == 0:
        warnings.append(f"{what} undefined (zero denominator), set to 0")
        return 0.0
    return float(num / den)


def roc_auc(y_true, score) -> float | None:
    """Area under the ROC curve (trapezoidal, ties handled); None without both classes."""
    y = np.asarray(y_true, dtype=bool)
    s = np.asarray(score, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # one ROC point per distinct threshold
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def classification_metrics(labels: Sequence[int], predictions: Sequence[int], scores=None,
                           n_classes: int | None = None, positive: int = 1,
                           class_names: Sequence[str] | None = None) -> MetricSuite:
    """Accuracy, macro precision/recall/F1, binary specificity and macro one-vs-rest AUC.

    ``positive`` picks the positive class for specificity in two-class tasks,
    i.e. specificity is the recall of the other class. Ratios with a zero
    denominator are reported as 0 and noted in ``warnings``.

    >>> m = classification_metrics([1]*10 + [0]*10, [1]*8 + [0]*2 + [1]*2 + [0]*8)
    >>> round(m.f1, 3), round(m.specificity, 3)
    (0.8, 0.8)
    """
    labels = np.asarray(labels, dtype=int)
    predictions = np.asarray(predictions, dtype=int)
    if labels.shape != predictions.shape:
        raise ValueError(f"{len(labels)} labels but {len(predictions)} predictions")
    if scores is not None:
        scores = np.asarray(scores, dtype=float)
        if scores.ndim != 2 or len(scores) != len(labels):
            raise ValueError("scores must have one row per sample")
    if n_classes is None:
        n_classes = scores.shape[1] if scores is not None else int(max(labels.max(initial=0), predictions.max(initial=0))) + 1
    names = list(class_names) if class_names else [str(c) for c in range(n_classes)]
    if len(labels) == 0:
        raise ValueError("no samples")
    warnings: list[str] = []
    cm = confusion_matrix(labels, predictions, n_classes)
    per_class = []
    for c in range(n_classes):
        tp = cm[c, c]
        p = _ratio(tp, cm[:, c].sum(), f"precision[{names[c]}]", warnings)
        r = _ratio(tp, cm[c, :].sum(), f"recall[{names[c]}]", warnings)
        f = _ratio(2 * p * r, p + r, f"f1[{names[c]}]", warnings)
        auc = None
        if scores is not None:
            auc = roc_auc(labels == c, scores[:, c])
            if auc is None:
                warnings.append(f"auc[{names[c]}] undefined (single class present), set to 0")
                auc = 0.0
        per_class.append({"class": names[c], "precision": p, "recall": r, "f1": f, "auc": auc,
                          "support": int(cm[c, :].sum())})
    specificity = None
    if n_classes == 2:
        neg = 1 - positive
        specificity = _ratio(cm[neg, neg], cm[neg, :].sum(), "specificity", warnings)
    return MetricSuite(
        accuracy=float(np.trace(cm) / cm.sum()),
        precision=float(np.mean([row["precision"] for row in per_class])),
        recall=float(np.mean([row["recall"] for row in per_class])),
        f1=float(np.mean([row["f1"] for row in per_class])),
        auc=None if scores is None else float(np.mean([row["auc"] for row in per_class])),
        specificity=specificity,
        per_class=per_class,
        confusion=cm.tolist(),
        warnings=warnings,
    )


def write_per_class_csv(suite: MetricSuite, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["class", "precision", "recall", "f1", "auc", "support"])
        writer.writeheader()
        writer.writerows(suite.per_class)


# ---------------------------------------------------------------------------
# explanation ranking


@dataclass
class RankEvaluation:
    ranks: list[int]
    error_at: dict[int, float]


def error_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of cases whose ground-truth token is ranked below the top ``k``.

    >>> error_at_k([1, 2, 3, 4], 2)
    0.5
    """
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks")
    if k < 1 or ranks.min() < 1:
        raise ValueError("ranks and k must be >= 1")
    return float(np.mean(ranks > k))


def rank_evaluation(ranks: Sequence[int], max_k: int) -> RankEvaluation:
    return RankEvaluation(list(map(int, ranks)), {k: error_at_k(ranks, k) for k in range(1, max_k + 1)})


def random_baseline_error_at_k(token_counts: Sequence[int], k: int, trials: int = 10_000, seed: int = 0) -> float:
    """Monte-Carlo error@k when the ground-truth token sits at a uniformly random rank."""
    counts = np.asarray(token_counts)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if counts.size == 0 or counts.min() < 1:
        raise ValueError("token counts must be >= 1")
    rng = np.random.default_rng(seed)
    ranks = np.floor(rng.random((trials, counts.size)) * counts).astype(int) + 1
    return float(np.mean(ranks > k))
