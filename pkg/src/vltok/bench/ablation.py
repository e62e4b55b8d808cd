"""Train-and-evaluate grid over query construction, box format and bin count."""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..config import RunConfig
from ..pipeline import Tracker, train
from .metrics import evaluate

AXES = ("query_mode", "box_format", "bins")
COLUMNS = (*AXES, "auc", "norm_precision", "precision")


def table_grid(bins=(50, 100, 500, 1000), formats=("corner", "center"), queries=("multi", "single")) -> list:
    return [
        {"query_mode": q, "box_format": f, "bins": k} for q, f, k in itertools.product(queries, formats, bins)
    ]


def evaluate_tracker(tracker: Tracker, sequences, threshold_px: float = 20.0):
    results = []
    for seq in sequences:
        pred = tracker.track_video(seq.frames, seq.caption, seq.gt_boxes[0])
        results.append((seq.name, pred, seq.gt_boxes, seq.attributes))
    return evaluate(results, threshold_px)


def run_cell(override: dict, base: RunConfig, train_seqs, eval_seqs, threshold_px: float = 20.0) -> dict:
    cfg = base.with_overrides(**override)
    result = train(train_seqs, cfg)
    report = evaluate_tracker(Tracker(result.params, result.text_vocab, cfg.tracker), eval_seqs, threshold_px)
    row = {axis: getattr(cfg.tracker, axis) for axis in AXES}
    row.update(auc=report.auc, norm_precision=report.norm_precision, precision=report.precision)
    return row


def run_ablation(grid, base: RunConfig, train_seqs, eval_seqs, threshold_px: float = 20.0, workers: int = 1) -> list:
    """One row per override, in grid order; every cell trains from the same seed."""
    grid = list(grid)
    for override in grid:
        base.with_overrides(**override)  # reject invalid cells before any training
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(run_cell, o, base, train_seqs, eval_seqs, threshold_px) for o in grid]
            return [f.result() for f in futures]
    return [run_cell(o, base, train_seqs, eval_seqs, threshold_px) for o in grid]


def write_table(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def format_table(rows) -> str:
    lines = ["query   format  bins   AUC     P_norm  P"]
    for r in rows:
        lines.append(
            f"{r['query_mode']:<7} {r['box_format']:<7} {r['bins']:<6} "
            f"{r['auc']:.4f}  {r['norm_precision']:.4f}  {r['precision']:.4f}"
        )
    return "\n".join(lines)
