"""Multi-label evaluation: sample-wise set metrics, micro AUROC/AUPRC and MCC."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UndefinedMetricError

METRIC_ORDER = ("auroc", "auprc", "accuracy", "precision", "recall", "f_score", "mcc")
METRIC_NAMES = {
    "auroc": "AUROC",
    "auprc": "AUPRC",
    "accuracy": "Accuracy",
    "precision": "Precision",
    "recall": "Recall",
    "f_score": "F-Score",
    "mcc": "MCC",
}


def _binary_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.isin(y, (0, 1)).all():
        raise DataError("labels must be binary 0/1")
    return y.astype(bool)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties at 1/2."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary_labels(labels).ravel()
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum of recall increments times precision at each score cut.

    Tied scores form one cut, so their order never matters.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary_labels(labels).ravel()
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    # last index of each block of equal scores
    cut = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp_c = tp[cut].astype(np.float64)
    precision = tp_c / (cut + 1)
    recall = tp_c / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def confusion(decisions, labels) -> tuple[int, int, int, int]:
    d = _binary_labels(decisions).ravel()
    y = _binary_labels(labels).ravel()
    if d.shape != y.shape:
        raise DataError("decisions and labels differ in length")
    tp = int(np.sum(d & y))
    tn = int(np.sum(~d & ~y))
    fp = int(np.sum(d & ~y))
    fn = int(np.sum(~d & y))
    return tp, tn, fp, fn


def mcc(decisions, labels) -> float:
    tp, tn, fp, fn = confusion(decisions, labels)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def samplewise(decisions: np.ndarray, targets: np.ndarray) -> dict[str, float]:
    """Per-row set precision/recall/F1 and label accuracy, averaged over rows.

    Empty-set conventions: precision is 1 when both sets are empty and 0 when
    only the prediction is empty; recall is 1 when the true set is empty.
    """
    d = decisions.astype(bool)
    t = targets.astype(bool)
    inter = (d & t).sum(axis=1).astype(np.float64)
    n_pred = d.sum(axis=1)
    n_true = t.sum(axis=1)
    precision = np.where(n_pred > 0, inter / np.maximum(n_pred, 1), np.where(n_true == 0, 1.0, 0.0))
    recall = np.where(n_true > 0, inter / np.maximum(n_true, 1), 1.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    accuracy = (d == t).mean(axis=1)
    return {
        "accuracy": float(accuracy.mean()),
        "precision": float(precision.mean()),
        "recall": float(recall.mean()),
        "f_score": float(f1.mean()),
    }


@dataclass
class EvalReport:
    auroc: float
    auprc: float
    accuracy: float
    precision: float
    recall: float
    f_score: float
    mcc: float
    threshold: float = 0.5
    n_samples: int = 0
    averaging: str = "micro"
    per_group: list[dict] = field(default_factory=list)

    def metrics(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_ORDER}

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics(),
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "averaging": self.averaging,
            "per_group": self.per_group,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            **d["metrics"],
            threshold=d["threshold"],
            n_samples=d["n_samples"],
            averaging=d.get("averaging", "micro"),
            per_group=d.get("per_group", []),
        )

    def to_table(self, title: str = "Value") -> str:
        lines = [f"{'Parameter':<12}{title:>12}", "-" * 24]
        for k in METRIC_ORDER:
            lines.append(f"{METRIC_NAMES[k]:<12}{getattr(self, k):>12.4f}")
        lines.append("")
        lines.append(f"threshold={self.threshold}  samples={self.n_samples}  averaging={self.averaging}")
        lines.append("")
        lines.append(f"{'Group':>5} {'Prev':>7} {'AUROC':>7} {'AUPRC':>7} {'Prec':>7} {'Rec':>7} {'F1':>7}")

        def fmt(v):
            return f"{v:>7.4f}" if v is not None else f"{'n/a':>7}"

        for g in self.per_group:
            lines.append(
                f"{g['group_id']:>5} {fmt(g['prevalence'])} {fmt(g['auroc'])} {fmt(g['auprc'])} "
                f"{fmt(g['precision'])} {fmt(g['recall'])} {fmt(g['f_score'])}"
            )
        return "\n".join(lines) + "\n"


def _per_group(scores: np.ndarray, targets: np.ndarray, decisions: np.ndarray) -> list[dict]:
    rows = []
    for g in range(targets.shape[1]):
        y, s, d = targets[:, g], scores[:, g], decisions[:, g]
        tp, tn, fp, fn = confusion(d, y)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        try:
            roc = auroc(s, y)
        except UndefinedMetricError:
            roc = None
        try:
            pr = auprc(s, y)
        except UndefinedMetricError:
            pr = None
        rows.append(
            {
                "group_id": g + 1,
                "support": int(y.sum()),
                "prevalence": float(y.mean()),
                "auroc": roc,
                "auprc": pr,
                "precision": prec,
                "recall": rec,
                "f_score": 2 * prec * rec / (prec + rec) if prec + rec else 0.0,
            }
        )
    return rows


def evaluate(scores, targets, threshold: float = 0.5) -> EvalReport:
    """Score matrix (N x 20) against binary targets of the same shape."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets)
    if s.shape != t.shape or s.ndim != 2:
        raise DataError(f"scores {s.shape} and targets {t.shape} must be equal-shaped matrices")
    t = _binary_labels(t)
    decisions = s >= threshold
    sw = samplewise(decisions, t)
    return EvalReport(
        auroc=auroc(s.ravel(), t.ravel()),
        auprc=auprc(s.ravel(), t.ravel()),
        mcc=mcc(decisions.ravel(), t.ravel()),
        threshold=threshold,
        n_samples=int(s.shape[0]),
        per_group=_per_group(s, t, decisions),
        **sw,
    )
