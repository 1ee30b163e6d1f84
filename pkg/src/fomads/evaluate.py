"""Evaluation reports: per-condition accuracies and confusion matrices.

A report covers one or more attack conditions (normal, bias, noise,
replacement, replay). For each it records the overall 25-class accuracy,
the inverter-level accuracy (normal vs which inverter), the switch-level
accuracy, the full confusion matrix, and the fraction of errors that land
on an adjacent class (same inverter, or a neighboring switch index).

Switch-level accuracy is computed over fault windows routed to the
correct inverter by default; the ``switch_metric='all'`` convention
scores every fault window instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .labels import N_CLASSES, decode_label, inverter_of

CONDITION_ORDER = ("normal", "bias", "noise", "replacement", "replay")

REPORT_HEADER = [
    "condition", "overall_acc", "inverter_acc", "switch_acc",
    "adjacency_error_frac", "n_windows",
]


@dataclass
class ConditionResult:
    overall_acc: float
    inverter_acc: float
    switch_acc: float
    adjacency_error_frac: float
    confusion: np.ndarray
    n_windows: int


@dataclass
class EvalReport:
    """Per-condition evaluation results, ordered for the summary table."""

    conditions: dict[str, ConditionResult] = field(default_factory=dict)
    switch_metric: str = "routed"

    def add(self, condition: str, y_true: np.ndarray, y_pred: np.ndarray) -> ConditionResult:
        result = score_predictions(y_true, y_pred, self.switch_metric)
        self.conditions[condition] = result
        return result

    def ordered_conditions(self) -> list[str]:
        known = [c for c in CONDITION_ORDER if c in self.conditions]
        extra = [c for c in self.conditions if c not in CONDITION_ORDER]
        return known + sorted(extra)

    def to_csv(self, path: str) -> None:
        """Summary rows; confusion matrices go to sibling files per condition."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(REPORT_HEADER) + "\n")
            for cond in self.ordered_conditions():
                r = self.conditions[cond]
                fh.write(f"{cond},{r.overall_acc!r},{r.inverter_acc!r},{r.switch_acc!r},"
                         f"{r.adjacency_error_frac!r},{r.n_windows}\n")
        stem = path[:-4] if path.endswith(".csv") else path
        for cond in self.ordered_conditions():
            save_confusion_csv(f"{stem}_confusion_{cond}.csv", self.conditions[cond].confusion)

    def table(self) -> str:
        """Human-readable summary, columns in the fixed condition order."""
        conds = self.ordered_conditions()
        lines = ["metric".ljust(22) + "".join(c.rjust(14) for c in conds)]
        for name, attr in (("overall acc", "overall_acc"),
                           ("inverter acc", "inverter_acc"),
                           ("switch acc", "switch_acc"),
                           ("adjacency err frac", "adjacency_error_frac")):
            row = name.ljust(22)
            for c in conds:
                row += f"{getattr(self.conditions[c], attr):14.4f}"
            lines.append(row)
        return "\n".join(lines)


def score_predictions(y_true: np.ndarray, y_pred: np.ndarray,
                      switch_metric: str = "routed") -> ConditionResult:
    """All per-condition metrics from true and predicted class ids."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ConfigError("need equal-length, non-empty label arrays")
    if switch_metric not in ("routed", "all"):
        raise ConfigError(f"unknown switch metric {switch_metric!r}")

    overall = float(np.mean(y_true == y_pred))

    inv_true = np.array([inverter_of(c) for c in y_true])
    inv_pred = np.array([inverter_of(c) for c in y_pred])
    inverter_acc = float(np.mean(inv_true == inv_pred))

    fault = y_true > 0
    if switch_metric == "routed":
        scored = fault & (inv_pred == inv_true)
    else:
        scored = fault
    if scored.any():
        sw_true = np.array([decode_label(c)[1] for c in y_true[scored]])
        sw_pred = np.array([decode_label(c)[1] if c > 0 else -1 for c in y_pred[scored]])
        switch_acc = float(np.mean(sw_true == sw_pred))
    else:
        switch_acc = float("nan")

    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(confusion, (y_true, y_pred), 1)

    errors = y_true != y_pred
    n_err = int(errors.sum())
    if n_err:
        adj = 0
        for t, p in zip(y_true[errors], y_pred[errors]):
            if t > 0 and p > 0:
                it, st = decode_label(t)
                ip, sp = decode_label(p)
                if it == ip or abs(st - sp) == 1:
                    adj += 1
        adjacency = adj / n_err
    else:
        adjacency = 0.0

    return ConditionResult(overall, inverter_acc, switch_acc, adjacency,
                           confusion, int(y_true.size))


def save_confusion_csv(path: str, confusion: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("true_class," + ",".join(f"pred_{j}" for j in range(confusion.shape[1])) + "\n")
        for i, row in enumerate(confusion):
            fh.write(f"{i}," + ",".join(str(v) for v in row) + "\n")


def accuracy_from_confusion(confusion: np.ndarray) -> float:
    """Overall accuracy recomputed from a confusion matrix (trace / total)."""
    total = confusion.sum()
    if total == 0:
        raise ConfigError("empty confusion matrix")
    return float(np.trace(confusion) / total)
