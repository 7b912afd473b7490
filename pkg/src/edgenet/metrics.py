"""Confusion matrix, the five detection metrics, ROC curve and AUC.

Positive class is the anomaly (label 1). Degenerate denominators resolve to
0.0 and set ``MetricReport.degenerate`` so callers can tell a true zero from
a vacuous one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, SingleClassInput


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    far: float
    precision: float
    detection_rate: float
    f1: float
    degenerate: bool = False

    def csv_row(self) -> str:
        """Percentages with 4 decimals, column order FAR%, Acc%, Prec%, DR%, F1%."""
        vals = (self.far, self.accuracy, self.precision, self.detection_rate, self.f1)
        return ",".join(f"{100.0 * v:.4f}" for v in vals)


METRICS_CSV_HEADER = "FAR%,Acc%,Prec%,DR%,F1%"


@dataclass(frozen=True)
class RocCurve:
    points: list[tuple[float, float]]  # (fpr, tpr), threshold descending
    auc: float

    def csv(self) -> str:
        lines = ["fpr,tpr"]
        lines += [f"{fpr!r},{tpr!r}" for fpr, tpr in self.points]
        return "\n".join(lines) + "\n"


def confusion(labels, preds) -> ConfusionMatrix:
    """Count TP/TN/FP/FN with anomaly (1) as the positive class."""
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    if labels.shape != preds.shape:
        raise LengthMismatch(f"labels {labels.shape} vs preds {preds.shape}")
    if labels.size == 0:
        raise EmptyInput("need at least one labelled prediction")
    labels = labels.astype(bool)
    preds = preds.astype(bool)
    tp = int(np.sum(labels & preds))
    tn = int(np.sum(~labels & ~preds))
    fp = int(np.sum(~labels & preds))
    fn = int(np.sum(labels & ~preds))
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricReport:
    if cm.total < 1:
        raise EmptyInput("empty confusion matrix")
    degenerate = False

    def ratio(num: int, den: int) -> float:
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    accuracy = (cm.tp + cm.tn) / cm.total
    far = ratio(cm.fp, cm.fp + cm.tn)
    precision = ratio(cm.tp, cm.tp + cm.fp)
    dr = ratio(cm.tp, cm.tp + cm.fn)
    if precision + dr == 0.0:
        degenerate = True
        f1 = 0.0
    else:
        f1 = 2.0 * precision * dr / (precision + dr)
    return MetricReport(accuracy=accuracy, far=far, precision=precision,
                        detection_rate=dr, f1=f1, degenerate=degenerate)


def roc_curve(scores, labels) -> RocCurve:
    """ROC swept over distinct scores descending; tied scores form one step.

    AUC is the trapezoidal area, which with grouped ties equals the
    pairwise ranking statistic with half credit for tied pairs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i:j].sum())
        fp += (j - i) - int(sorted_labels[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j

    fprs = np.array([p[0] for p in points])
    tprs = np.array([p[1] for p in points])
    auc = float(np.trapezoid(tprs, fprs))
    return RocCurve(points=points, auc=auc)
