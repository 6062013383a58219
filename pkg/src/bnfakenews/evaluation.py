"""Confusion counts, accuracy/precision/recall/F1, ROC sweep and trapezoidal AUC.

The positive class is label 1 (authentic).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .tokenizer import Vocabulary, encode_batch
from .training import classify


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class EmptyConfusion(ValueError):
    pass


class SingleClassLabels(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    auc: float | None = None
    threshold: float | None = None
    undefined: tuple[str, ...] = ()

    KEYS = ("accuracy", "precision", "recall", "f1", "auc", "threshold", "tp", "tn", "fp", "fn", "undefined")

    def to_text(self) -> str:
        """One ``key: value`` line per field in a fixed order; reals to 6 places."""
        cm = self.confusion
        values = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "threshold": self.threshold,
            "tp": cm.tp,
            "tn": cm.tn,
            "fp": cm.fp,
            "fn": cm.fn,
            "undefined": ",".join(self.undefined) or "none",
        }
        lines = []
        for key in self.KEYS:
            v = values[key]
            if v is None:
                v = "na"
            elif isinstance(v, float):
                v = f"{v:.6f}"
            lines.append(f"{key}: {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split(": ", 1) for line in text.strip().splitlines())

        def real(key):
            return None if kv[key] == "na" else float(kv[key])

        cm = ConfusionMatrix(*(int(kv[k]) for k in ("tp", "tn", "fp", "fn")))
        undefined = () if kv["undefined"] == "none" else tuple(kv["undefined"].split(","))
        return cls(real("accuracy"), real("precision"), real("recall"), real("f1"), cm, real("auc"), real("threshold"), undefined)


@dataclass
class RocCurve:
    points: list[tuple[float, float, float]] = field(default_factory=list)  # (fpr, tpr, threshold)

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in self.points:
            w.writerow([repr(float(fpr)), repr(float(tpr)), "inf" if np.isinf(thr) else repr(float(thr))])
        return buf.getvalue()


def confusion(labels, predictions) -> ConfusionMatrix:
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(predictions, dtype=np.int64)
    if y.shape != p.shape:
        raise LengthMismatch(f"{y.size} labels vs {p.size} predictions")
    if y.size == 0:
        raise EmptyInput("nothing to evaluate")
    return ConfusionMatrix(
        tp=int(((y == 1) & (p == 1)).sum()),
        tn=int(((y == 0) & (p == 0)).sum()),
        fp=int(((y == 0) & (p == 1)).sum()),
        fn=int(((y == 1) & (p == 0)).sum()),
    )


def metrics_from_confusion(cm: ConfusionMatrix, auc: float | None = None, threshold: float | None = None) -> MetricsReport:
    """Accuracy, precision, recall and F1; a zero denominator yields 0 and is flagged."""
    if cm.total <= 0:
        raise EmptyConfusion("confusion matrix is empty")
    undefined = []
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if cm.tp + cm.fn:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return MetricsReport(accuracy, precision, recall, f1, cm, auc, threshold, tuple(undefined))


def roc_points(scores, labels) -> RocCurve:
    """Exact threshold sweep over the distinct scores, highest first.

    The first point is the (0, 0) sentinel at threshold +inf; tied scores share a
    single point, and the sweep ends at (1, 1) with the lowest score.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y == 0)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    points = [(0.0, 0.0, float("inf"))]
    for i in ends:
        points.append((fps[i] / n_neg, tps[i] / n_pos, float(s[i])))
    return RocCurve(points)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve's (fpr, tpr) points."""
    x, y = curve.fpr, curve.tpr
    if len(x) < 2:
        return 0.0
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def confusion_csv(cm: ConfusionMatrix) -> str:
    return f"actual\\predicted,predicted_0,predicted_1\nactual_0,{cm.tn},{cm.fp}\nactual_1,{cm.fn},{cm.tp}\n"


def evaluate_scores(scores, labels, threshold: float = 0.5) -> tuple[MetricsReport, RocCurve | None]:
    labels = np.asarray(labels, dtype=np.int64)
    cm = confusion(labels, classify(np.asarray(scores), threshold))
    curve = None
    area = None
    if 0 < labels.sum() < labels.size:
        curve = roc_points(scores, labels)
        area = auc(curve)
    return metrics_from_confusion(cm, area, threshold), curve


def evaluate(model, test_docs, vocab: Vocabulary, threshold: float = 0.5) -> tuple[MetricsReport, RocCurve | None]:
    """Score the untouched test documents with ``model`` and assemble every report.

    The ROC curve (and AUC) is None when the test labels contain a single class.
    """
    X = encode_batch(test_docs, vocab, model.spec.seq_len)
    labels = np.array([d.label for d in test_docs], dtype=np.int64)
    return evaluate_scores(model.predict(X), labels, threshold)
