"""Binary classification metrics with AD as the positive class,
segment-to-subject aggregation, and multi-seed averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision_ad: float
    precision_cn: float
    recall_ad: float
    recall_cn: float
    f1_ad: float
    f1_cn: float
    degenerate: bool = False  # set when any metric hit a zero denominator

    METRIC_NAMES = ("accuracy", "precision_ad", "precision_cn",
                    "recall_ad", "recall_cn", "f1_ad", "f1_cn")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def confusion(preds: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    """Count a 2x2 confusion matrix; 1 = AD (positive), 0 = CN."""
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(labels)} labels")
    if len(preds) == 0:
        raise ValueError("cannot build a confusion matrix from zero pairs")
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p not in (0, 1) or y not in (0, 1):
            raise ValueError(f"predictions and labels must be 0 or 1: got ({p}, {y})")
        if p == 1 and y == 1:
            tp += 1
        elif p == 1 and y == 0:
            fp += 1
        elif p == 0 and y == 0:
            tn += 1
        else:
            fn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def _safe_div(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Accuracy plus per-class precision/recall/F1.

    CN metrics are the positive-class metrics after swapping class roles.
    Zero-denominator cases yield 0.0 and set the `degenerate` flag.
    """
    if c.total == 0:
        raise ValueError("confusion matrix is empty")
    degenerate = False
    accuracy = (c.tp + c.tn) / c.total
    precision_ad, d1 = _safe_div(c.tp, c.tp + c.fp)
    recall_ad, d2 = _safe_div(c.tp, c.tp + c.fn)
    precision_cn, d3 = _safe_div(c.tn, c.tn + c.fn)
    recall_cn, d4 = _safe_div(c.tn, c.tn + c.fp)
    f1_ad, d5 = _safe_div(2 * precision_ad * recall_ad, precision_ad + recall_ad)
    f1_cn, d6 = _safe_div(2 * precision_cn * recall_cn, precision_cn + recall_cn)
    degenerate = d1 or d2 or d3 or d4 or d5 or d6
    return MetricsReport(accuracy, precision_ad, precision_cn,
                         recall_ad, recall_cn, f1_ad, f1_cn, degenerate)


def aggregate_subject(segment_probs: Sequence[float]) -> float:
    """Arithmetic mean of one subject's segment probabilities."""
    if len(segment_probs) == 0:
        raise ValueError("subject has no segment probabilities")
    return sum(segment_probs) / len(segment_probs)


def aggregate_subject_majority(segment_preds: Sequence[int]) -> int:
    """Majority vote over segment predictions; ties go to AD."""
    if len(segment_preds) == 0:
        raise ValueError("subject has no segment predictions")
    positive = sum(1 for p in segment_preds if p == 1)
    return 1 if positive * 2 >= len(segment_preds) else 0


def average_over_seeds(reports: Sequence[MetricsReport]) -> tuple[MetricsReport, dict[str, float]]:
    """Arithmetic mean and population standard deviation per metric."""
    if not reports:
        raise ValueError("no reports to average")
    n = len(reports)
    means: dict[str, float] = {}
    sds: dict[str, float] = {}
    for name in MetricsReport.METRIC_NAMES:
        vals = [getattr(r, name) for r in reports]
        mean = sum(vals) / n
        means[name] = mean
        sds[name] = math.sqrt(sum((v - mean) ** 2 for v in vals) / n)
    mean_report = MetricsReport(degenerate=any(r.degenerate for r in reports), **means)
    return mean_report, sds


def format_percent(value: float) -> str:
    """Two-decimal percent rendering used by the report printer."""
    return f"{100.0 * value:.2f}"
