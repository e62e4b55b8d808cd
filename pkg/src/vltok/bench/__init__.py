"""Synthetic benchmark, tracking metrics and the ablation harness."""

from .data import (
    SyntheticSequence,
    generate_dataset,
    load_dataset,
    parse_caption,
    save_dataset,
)
from .metrics import (
    MetricsReport,
    evaluate,
    iou,
    normalized_precision,
    precision_score,
    success_auc,
)

__all__ = [
    "MetricsReport",
    "SyntheticSequence",
    "evaluate",
    "generate_dataset",
    "iou",
    "load_dataset",
    "normalized_precision",
    "parse_caption",
    "precision_score",
    "save_dataset",
    "success_auc",
]
