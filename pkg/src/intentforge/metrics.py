"""Binary classification metrics: confusion counts, per-class reports, ROC/AUC
and threshold sweeps.

A sample is predicted positive iff ``p >= threshold``. Undefined ratios
(zero denominators) are reported as 0.
"""
import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from intentforge.errors import DegenerateLabelsError, EmptyInputError, InvalidDimensionError

DEFAULT_THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def _pair(probs, labels):
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape:
        raise InvalidDimensionError(f"{p.size} scores vs {y.size} labels")
    return p, y > 0.5


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self):
        return self.tn + self.fp + self.fn + self.tp

    @property
    def predicted_positive(self):
        return self.tp + self.fp


def confusion(probs, labels, threshold=0.5):
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    p, y = _pair(probs, labels)
    pred = p >= threshold
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    return ConfusionMatrix(tn=int(y.size) - tp - fp - fn, fp=fp, fn=fn, tp=tp)


def _ratio(num, den):
    return num / den if den else 0.0


@dataclass(frozen=True)
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassReport:
    negative: ClassStats
    positive: ClassStats
    accuracy: float

    def __getitem__(self, cls):
        return (self.negative, self.positive)[cls]

    def to_dict(self):
        return {"0": asdict(self.negative), "1": asdict(self.positive), "accuracy": self.accuracy}


def _stats(correct, predicted, actual):
    precision = _ratio(correct, predicted)
    recall = _ratio(correct, actual)
    return ClassStats(precision, recall, _ratio(2 * precision * recall, precision + recall), actual)


def report(cm: ConfusionMatrix):
    if cm.total <= 0:
        raise EmptyInputError("cannot report on an empty confusion matrix")
    return ClassReport(
        negative=_stats(cm.tn, cm.tn + cm.fn, cm.tn + cm.fp),
        positive=_stats(cm.tp, cm.tp + cm.fp, cm.tp + cm.fn),
        accuracy=(cm.tn + cm.tp) / cm.total,
    )


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # score at each step; +inf for the (0, 0) origin
    auc: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        w.writerows(zip(map(repr, self.fpr.tolist()), map(repr, self.tpr.tolist())))
        return buf.getvalue()


def roc_auc(probs, labels):
    """ROC over every distinct score (a run of tied scores is one diagonal step), trapezoidal AUC."""
    p, y = _pair(probs, labels)
    n_pos = int(np.count_nonzero(y))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC needs both classes present")
    order = np.argsort(-p, kind="mergesort")
    p, y = p[order], y[order]
    last_of_group = np.r_[p[1:] != p[:-1], True]
    tps = np.cumsum(y)[last_of_group]
    fps = np.cumsum(~y)[last_of_group]
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(fpr, tpr, np.r_[np.inf, p[last_of_group]], auc)


@dataclass(frozen=True)
class ThresholdSweep:
    thresholds: tuple
    matrices: tuple
    reports: tuple

    COLUMNS = ("threshold", "class", "precision", "recall", "f1", "support", "accuracy")

    def rows(self):
        for t, rep in zip(self.thresholds, self.reports):
            for cls in (0, 1):
                s = rep[cls]
                yield (t, cls, s.precision, s.recall, s.f1, s.support, rep.accuracy)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for t, cls, prec, rec, f1, sup, acc in self.rows():
            w.writerow([f"{t:g}", cls, f"{prec:.6f}", f"{rec:.6f}", f"{f1:.6f}", sup, f"{acc:.6f}"])
        return buf.getvalue()

    def to_text(self):
        lines = [f"{'Threshold':>9}  {'Class':>5}  {'Precision':>9}  {'Recall':>6}  {'F1-score':>8}  {'Accuracy':>8}"]
        for t, cls, prec, rec, f1, _, acc in self.rows():
            head = f"{t:>9.1f}" if cls == 0 else " " * 9
            tail = f"{acc:>8.2f}" if cls == 0 else ""
            lines.append(f"{head}  {cls:>5}  {prec:>9.2f}  {rec:>6.2f}  {f1:>8.2f}  {tail}".rstrip())
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps(
            [{"threshold": t, "confusion": asdict(cm), "report": rep.to_dict()}
             for t, cm, rep in zip(self.thresholds, self.matrices, self.reports)],
            indent=2,
        )


def sweep(probs, labels, thresholds=DEFAULT_THRESHOLDS):
    thresholds = tuple(float(t) for t in thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    mats = tuple(confusion(probs, labels, t) for t in thresholds)
    return ThresholdSweep(thresholds, mats, tuple(report(m) for m in mats))


def format_report(cm: ConfusionMatrix, rep: ClassReport, threshold=0.5):
    """Plain-text classification report and confusion matrix."""
    names = ("0 (No Purchase)", "1 (Purchase)")
    lines = [
        f"threshold = {threshold:g}",
        f"{'Class':<16}{'Precision':>10}{'Recall':>8}{'F1-score':>10}{'Support':>10}",
    ]
    for cls, name in enumerate(names):
        s = rep[cls]
        lines.append(f"{name:<16}{s.precision:>10.4f}{s.recall:>8.4f}{s.f1:>10.4f}{s.support:>10d}")
    lines += [
        f"accuracy = {rep.accuracy:.4f}",
        "",
        f"{'':<20}{'Predicted No Purchase':>22}{'Predicted Purchase':>20}",
        f"{'Actual No Purchase':<20}{cm.tn:>22d}{cm.fp:>20d}",
        f"{'Actual Purchase':<20}{cm.fn:>22d}{cm.tp:>20d}",
    ]
    return "\n".join(lines) + "\n"


def report_csv(rep: ClassReport, threshold=0.5):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ThresholdSweep.COLUMNS)
    for cls in (0, 1):
        s = rep[cls]
        w.writerow([f"{threshold:g}", cls, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}", s.support,
                    f"{rep.accuracy:.6f}"])
    return buf.getvalue()
