"""
Training a tiny tracker and following a target
==============================================

The tracker reads a template crop, a search crop and a caption, and writes
the box as four coordinate tokens, one at a time.  This demo trains the toy
configuration for a few hundred steps (a couple of minutes on one core),
then tracks a held-out video and scores it.

A few hundred steps teach the model the usual box shape and size, not where
the target is: the loss settles near the entropy of the coordinate prior.
The step count is the first command-line argument.
"""

import sys
import time

from vltok import RunConfig
from vltok.bench.ablation import evaluate_tracker
from vltok.bench.data import format_boxes, generate_dataset
from vltok.pipeline import Tracker, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
train_seqs = generate_dataset(50, seed=1, difficulty="easy")
test_seqs = generate_dataset(5, seed=2, difficulty="easy")

run = RunConfig().with_overrides(steps=steps, batch_size=8)
start = time.time()
result = train(train_seqs, run, log=lambda s, l: print(f"step {s:5d}  loss {l:.3f}  {time.time() - start:5.0f}s"))

tracker = Tracker(result.params, result.text_vocab, run.tracker)
seq = test_seqs[0]
boxes = tracker.track_video(seq.frames, seq.caption, seq.gt_boxes[0])
print(seq.caption)
print(format_boxes(boxes[:3]), "...")

report = evaluate_tracker(tracker, test_seqs, threshold_px=8.0)
print(f"held-out AUC {report.auc:.3f}  P@8px {report.precision:.3f}")
