"""Top-1 retrieval metrics: R@1, thresholded PR curve, max-F1, PR-AUC.

A query counts as predicted positive at threshold t when its top-1 distance
falls strictly below t (small distance = high confidence). Thresholds sit
just above each unique observed distance, so every achievable operating
point appears exactly once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .retrieval import QueryRecord


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float, float], ...]  # (threshold, precision, recall)
    n_positives: int

    def __len__(self) -> int:
        return len(self.points)

    @property
    def empty(self) -> bool:
        return len(self.points) == 0


@dataclass(frozen=True)
class EvalReport:
    recall_at_1: float
    max_f1: float
    pr_auc: float
    curve: PRCurve
    n_queries_with_positives: int
    warnings: tuple[str, ...] = ()


def recall_at_1(records: list[QueryRecord]) -> float:
    """Correct-top-1 fraction over queries that have any positive."""
    relevant = [r for r in records if r.has_any_positive]
    if not relevant:
        return 0.0
    return sum(r.is_positive for r in relevant) / len(relevant)


def pr_curve(distances, labels) -> PRCurve:
    """Sweep thresholds over the top-1 distances of relevant queries."""
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if d.shape != y.shape:
        raise ShapeError(f"lengths differ: {d.shape} vs {y.shape}")
    n_pos = int(y.sum())
    if d.size == 0 or n_pos == 0:
        return PRCurve(points=(), n_positives=n_pos)

    thresholds = [math.nextafter(v, math.inf) for v in sorted(set(d.tolist()))]
    thresholds.insert(0, float(d.min()))  # below the minimum: no predictions
    points = []
    for t in thresholds:
        pred = d < t
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        if tp + fp == 0:
            continue  # precision undefined: omit
        points.append((t, tp / (tp + fp), tp / n_pos))
    return PRCurve(points=tuple(points), n_positives=n_pos)


def max_f1(curve: PRCurve) -> float:
    """Best 2PR/(P+R) over the curve's operating points."""
    if curve.empty:
        raise DegenerateInputError("empty PR curve")
    best = 0.0
    for _, p, r in curve.points:
        if p + r > 0:
            best = max(best, 2 * p * r / (p + r))
    return best


def pr_auc(curve: PRCurve) -> float:
    """Trapezoidal integral of precision over the observed recall span."""
    if curve.empty:
        raise DegenerateInputError("empty PR curve")
    pts = sorted(curve.points, key=lambda p: (p[2], p[0]))  # recall, then threshold
    area = 0.0
    for (_, p0, r0), (_, p1, r1) in zip(pts, pts[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def build_report(records: list[QueryRecord]) -> EvalReport:
    """Aggregate per-query records into the full metric set."""
    relevant = [r for r in records if r.has_any_positive]
    warnings = []
    if not relevant:
        warnings.append("no query has ground-truth positives; metrics are 0")
    curve = pr_curve(
        [r.distance for r in relevant], [int(r.is_positive) for r in relevant]
    )
    if curve.empty and relevant:
        warnings.append("no correct top-1 matches; PR curve is empty")
    return EvalReport(
        recall_at_1=recall_at_1(records),
        max_f1=0.0 if curve.empty else max_f1(curve),
        pr_auc=0.0 if curve.empty else pr_auc(curve),
        curve=curve,
        n_queries_with_positives=len(relevant),
        warnings=tuple(warnings),
    )


def report_to_json(report: EvalReport) -> str:
    payload = {
        "recall_at_1": report.recall_at_1,
        "max_f1": report.max_f1,
        "pr_auc": report.pr_auc,
        "n_queries_with_positives": report.n_queries_with_positives,
        "warnings": list(report.warnings),
        "curve": [
            {"threshold": t, "precision": p, "recall": r}
            for t, p, r in report.curve.points
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def curve_to_csv(curve: PRCurve) -> str:
    lines = ["threshold,precision,recall"]
    for t, p, r in curve.points:
        lines.append(f"{t!r},{p!r},{r!r}")
    return "\n".join(lines) + "\n"
