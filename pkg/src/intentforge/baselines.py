"""Logistic-regression baseline and the model comparison table."""
import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from intentforge.engine import AdamState, adam_step, predict_proba, sigmoid, weighted_bce
from intentforge.engine.model import sample_weights
from intentforge.errors import DivergenceError, IncompatibleArtifactsError, InvalidDimensionError
from intentforge.metrics import confusion, report, roc_auc

TABLE_THRESHOLDS = (0.5, 0.3, 0.6, 0.9)
TABLE_COLUMNS = ("Model / Threshold", "Accuracy", "Precision", "Recall", "F1-Score", "AUC-ROC")
ABSENT_BASELINES = ("Random Forest", "XGBoost")


@dataclass
class LogRegParams:
    w: np.ndarray
    b: float
    schema_digest: Optional[str] = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).ravel()
        self.b = float(self.b)
        if not (np.all(np.isfinite(self.w)) and math.isfinite(self.b)):
            raise ValueError("logistic regression parameters must be finite")

    @classmethod
    def zeros(cls, width, schema_digest=None):
        return cls(np.zeros(width), 0.0, schema_digest)


def _rows(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3 and x.shape[1] == 1:
        x = x[:, 0, :]
    if x.ndim != 2:
        raise InvalidDimensionError(f"logistic regression takes flat (rows, width) input, got shape {x.shape}")
    return x


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return sigmoid(z)


def predict_logreg(params: LogRegParams, rows):
    x = _rows(rows)
    if x.shape[1] != params.w.size:
        raise InvalidDimensionError(f"row width {x.shape[1]} != weight width {params.w.size}")
    return _sigmoid(x @ params.w + params.b)


def logreg_loss_and_grad(w, b, x, y, class_weights=(1.0, 1.0), l2=1e-4):
    """Weighted BCE plus ``0.5 * l2 * |w|^2``; returns ``(loss, dw, db)``."""
    x = _rows(x)
    y = np.asarray(y, dtype=np.float64)
    p = _sigmoid(x @ w + b)
    loss = weighted_bce(p, y, class_weights) + 0.5 * l2 * float(w @ w)
    dz = sample_weights(y, class_weights) * (p - y) / y.size
    return loss, x.T @ dz + l2 * w, float(dz.sum())


def train_logreg(x, y, lr=0.05, epochs=500, class_weights=(1.0, 1.0), l2=1e-4, seed=0, schema_digest=None):
    """Full-batch Adam on the penalized weighted BCE."""
    x = _rows(x)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] < 1 or x.shape[0] != y.size:
        raise InvalidDimensionError(f"{x.shape[0]} rows vs {y.size} labels")
    if lr <= 0:
        raise ValueError("lr must be positive")
    rng = np.random.default_rng(seed)
    params = {"w": rng.normal(0.0, 0.01, x.shape[1]), "b": np.zeros(1)}
    state = AdamState()
    for epoch in range(epochs):
        loss, dw, db = logreg_loss_and_grad(params["w"], params["b"][0], x, y, class_weights, l2)
        if not math.isfinite(loss):
            raise DivergenceError(epoch, 0, loss)
        params, state = adam_step(params, {"w": dw, "b": np.array([db])}, state, lr)
    return LogRegParams(params["w"], params["b"][0], schema_digest)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    auc: Optional[float] = None

    def values(self):
        return (self.accuracy, self.precision, self.recall, self.f1, self.auc)


def _rows_for(name, probs, labels, thresholds, tag=True):
    auc = roc_auc(probs, labels).auc
    out = []
    for t in thresholds:
        rep = report(confusion(probs, labels, t))
        out.append(ComparisonRow(f"{name} ({t:g})" if tag else name, rep.accuracy,
                                 rep[1].precision, rep[1].recall, rep[1].f1, auc))
    return out


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.rows:
            w.writerow([r.name] + ["" if v is None else f"{v:.6f}" for v in r.values()])
        return buf.getvalue()

    def to_text(self):
        width = max(len(TABLE_COLUMNS[0]), *(len(r.name) for r in self.rows))
        lines = [f"{TABLE_COLUMNS[0]:<{width}}" + "".join(f"{c:>10}" for c in TABLE_COLUMNS[1:])]
        for r in self.rows:
            cells = "".join(f"{'-':>10}" if v is None else f"{v:>10.4f}" for v in r.values())
            lines.append(f"{r.name:<{width}}{cells}")
        return "\n".join(lines) + "\n"


def compare(model, logreg: Optional[LogRegParams], plain_lstm, test, thresholds=TABLE_THRESHOLDS,
            baseline_threshold=0.5, model_name="Our Model"):
    """Comparison table over ``test`` (a FeatureMatrix).

    ``model`` and ``plain_lstm`` are checkpoints; either baseline may be None
    and is then listed as absent. Every artifact must carry ``test``'s digest.
    """
    for label, art in (("model", model), ("logistic regression", logreg), ("LSTM", plain_lstm)):
        if art is not None and art.schema_digest != test.schema_digest:
            raise IncompatibleArtifactsError(
                f"{label} was trained on schema {art.schema_digest[:12]}, data has {test.schema_digest[:12]}")
    x, y = test.model_input(), test.labels
    rows = []
    if logreg is None:
        rows.append(ComparisonRow("Logistic Regression"))
    else:
        rows += _rows_for("Logistic Regression", predict_logreg(logreg, x), y, [baseline_threshold], tag=False)
    rows += [ComparisonRow(name) for name in ABSENT_BASELINES]
    if plain_lstm is None:
        rows.append(ComparisonRow("LSTM"))
    else:
        rows += _rows_for("LSTM", predict_proba(plain_lstm.params, x), y, [baseline_threshold], tag=False)
    rows += _rows_for(model_name, predict_proba(model.params, x), y, thresholds)
    return ComparisonTable(tuple(rows))
