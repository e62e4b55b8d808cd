"""One-pass evaluation: success AUC, center precision and normalised precision.

Thresholds are compared strictly (``iou > t``) for success and inclusively
(``err <= t``) for both precision scores.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..seqtok import Box

SUCCESS_THRESHOLDS = np.arange(21) / 20  # 0, 0.05, ..., 1.0
NORM_PRECISION_THRESHOLDS = np.arange(51) / 100  # 0, 0.01, ..., 0.5


def _corners(boxes) -> np.ndarray:
    """Box list or (N, 4) corner array -> (N, 4) corner array."""
    if isinstance(boxes, Box):
        boxes = [boxes]
    if len(boxes) and isinstance(boxes[0], Box):
        return np.array([b.to_corner().values for b in boxes], dtype=np.float64)
    return np.asarray(boxes, dtype=np.float64).reshape(-1, 4)


def iou(a, b) -> float:
    return float(iou_many(_corners(a), _corners(b))[0])


def iou_many(a, b) -> np.ndarray:
    a, b = _corners(a), _corners(b)
    iw = np.clip(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1]) + (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1]) - inter
    safe = np.where(union > 0, union, 1.0)
    return np.where(union > 0, inter / safe, 0.0)


def success_curve(ious) -> np.ndarray:
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        raise ValueError("no IoU values")
    return (ious[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)


def success_auc(ious) -> float:
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size == 0:
        raise ValueError("no IoU values")
    # one integer count over one denominator, so the result is correctly rounded
    passes = int((ious[None, :] > SUCCESS_THRESHOLDS[:, None]).sum())
    return passes / (SUCCESS_THRESHOLDS.size * ious.size)


def centers(boxes) -> np.ndarray:
    c = _corners(boxes)
    return np.stack([(c[:, 0] + c[:, 2]) / 2, (c[:, 1] + c[:, 3]) / 2], axis=1)


def precision_score(pred_centers, gt_centers, threshold_px: float = 20.0) -> float:
    p = np.asarray(pred_centers, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(gt_centers, dtype=np.float64).reshape(-1, 2)
    if p.shape != g.shape:
        raise ValueError("prediction and ground truth differ in length")
    if p.size == 0:
        raise ValueError("no frames")
    return int((np.linalg.norm(p - g, axis=1) <= threshold_px).sum()) / p.shape[0]


def normalized_errors(pred, gt) -> np.ndarray:
    p, g = _corners(pred), _corners(gt)
    if p.shape != g.shape:
        raise ValueError("prediction and ground truth differ in length")
    gw, gh = g[:, 2] - g[:, 0], g[:, 3] - g[:, 1]
    if (gw <= 0).any() or (gh <= 0).any():
        raise ValueError("ground-truth boxes need positive width and height")
    dc = centers(p) - centers(g)
    return np.hypot(dc[:, 0] / gw, dc[:, 1] / gh)


def normalized_precision(pred, gt) -> float:
    err = normalized_errors(pred, gt)
    if err.size == 0:
        raise ValueError("no frames")
    passes = int((err[None, :] <= NORM_PRECISION_THRESHOLDS[:, None]).sum())
    return passes / (NORM_PRECISION_THRESHOLDS.size * err.size)


@dataclass
class SequenceScore:
    name: str
    auc: float
    precision: float
    norm_precision: float
    attributes: list = field(default_factory=list)
    success_curve: list = field(default_factory=list)


@dataclass
class MetricsReport:
    auc: float
    precision: float
    norm_precision: float
    precision_threshold: float
    sequences: list
    attributes: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def curve(self) -> np.ndarray:
        return np.mean([s.success_curve for s in self.sequences], axis=0)

    def write(self, report_path: Path | None = None, curves_path: Path | None = None) -> None:
        if report_path:
            Path(report_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if curves_path:
            with open(curves_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["threshold", "success_rate"])
                for t, r in zip(SUCCESS_THRESHOLDS, self.curve()):
                    w.writerow([f"{t:.2f}", f"{r:.6f}"])


def score_sequence(name: str, pred, gt, attributes=(), threshold_px: float = 20.0) -> SequenceScore:
    ious = iou_many(pred, gt)
    return SequenceScore(
        name=name,
        auc=success_auc(ious),
        precision=precision_score(centers(pred), centers(gt), threshold_px),
        norm_precision=normalized_precision(pred, gt),
        attributes=sorted(attributes),
        success_curve=success_curve(ious).tolist(),
    )


def evaluate(results, threshold_px: float = 20.0) -> MetricsReport:
    """``results``: iterable of (name, predicted boxes, gt boxes, attributes)."""
    scores = [score_sequence(n, p, g, a, threshold_px) for n, p, g, a in results]
    if not scores:
        raise ValueError("nothing to evaluate")

    def mean_of(items):
        return {
            "auc": float(np.mean([s.auc for s in items])),
            "precision": float(np.mean([s.precision for s in items])),
            "norm_precision": float(np.mean([s.norm_precision for s in items])),
            "count": len(items),
        }

    overall = mean_of(scores)
    by_attr = {}
    for attr in sorted({a for s in scores for a in s.attributes}):
        by_attr[attr] = mean_of([s for s in scores if attr in s.attributes])
    return MetricsReport(
        auc=overall["auc"],
        precision=overall["precision"],
        norm_precision=overall["norm_precision"],
        precision_threshold=threshold_px,
        sequences=scores,
        attributes=by_attr,
    )
