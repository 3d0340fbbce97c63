"""Confusion matrices, balanced accuracy and per-class recall."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .states import NUM_STATES, StateLabel


class MetricsError(ValueError):
    pass


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """3x3 counts, rows = true state, columns = predicted state."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) != len(y_pred):
        raise MetricsError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted labels")
    if len(y_true) == 0:
        raise MetricsError("empty label vectors")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        if np.any((y < 0) | (y >= NUM_STATES)) or not np.all(y == np.round(y)):
            raise MetricsError(f"{name} labels must be integer codes in 0..{NUM_STATES - 1}")
    flat = y_true.astype(np.int64) * NUM_STATES + y_pred.astype(np.int64)
    return np.bincount(flat, minlength=NUM_STATES**2).reshape(NUM_STATES, NUM_STATES)


def per_class_recall(confusion) -> np.ndarray:
    """Recall per true class; NaN for classes with no true samples."""
    c = np.asarray(confusion, dtype=np.float64)
    support = c.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, np.diag(c) / support, np.nan)


def balanced_accuracy(confusion) -> float:
    recalls = per_class_recall(confusion)
    present = ~np.isnan(recalls)
    if not present.any():
        raise MetricsError("confusion matrix has no true samples")
    return float(recalls[present].mean())


def plain_accuracy(confusion) -> float:
    c = np.asarray(confusion)
    total = c.sum()
    if total == 0:
        raise MetricsError("confusion matrix has no samples")
    return float(np.trace(c) / total)


def drowsy_recall(confusion) -> float:
    c = np.asarray(confusion)
    row = c[StateLabel.DROWSY]
    if row.sum() == 0:
        raise MetricsError("no drowsy samples in the evaluated set")
    return float(row[StateLabel.DROWSY] / row.sum())


@dataclass
class EvalReport:
    confusion: np.ndarray
    balanced_accuracy: float
    per_class_recall: np.ndarray
    plain_accuracy: float
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, y_true, y_pred, **metadata) -> "EvalReport":
        c = confusion_matrix(y_true, y_pred)
        return cls(c, balanced_accuracy(c), per_class_recall(c), plain_accuracy(c), dict(metadata))

    @property
    def drowsy_recall(self) -> float:
        return drowsy_recall(self.confusion)

    def to_text(self) -> str:
        """Flat ``key=value`` lines followed by the confusion matrix as three CSV rows."""
        lines = [f"{k}={self.metadata[k]}" for k in sorted(self.metadata)]
        lines.append(f"balanced_accuracy={self.balanced_accuracy!r}")
        lines.append(f"plain_accuracy={self.plain_accuracy!r}")
        for s in StateLabel:
            lines.append(f"recall_{s.name.lower()}={float(self.per_class_recall[s])!r}")
        lines.append("confusion=")
        lines.extend(",".join(str(int(v)) for v in row) for row in self.confusion)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        lines = text.splitlines()
        cut = lines.index("confusion=")
        kv = dict(line.split("=", 1) for line in lines[:cut])
        confusion = np.array([[int(v) for v in row.split(",")] for row in lines[cut + 1 : cut + 4]])
        fixed = {"balanced_accuracy", "plain_accuracy"} | {f"recall_{s.name.lower()}" for s in StateLabel}
        meta = {k: v for k, v in kv.items() if k not in fixed}
        return cls(
            confusion,
            float(kv["balanced_accuracy"]),
            per_class_recall(confusion),
            float(kv["plain_accuracy"]),
            meta,
        )
