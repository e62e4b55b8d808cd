"""
Query construction, box format and bin count
============================================

The ablation harness trains one tracker per grid cell from the same seed
and reports AUC, normalised precision and precision.  The step count here
is tiny so the whole 16-cell grid finishes in under a minute; the numbers
only become meaningful with thousands of steps per cell.
"""

from vltok import RunConfig
from vltok.bench.ablation import format_table, run_ablation, table_grid
from vltok.bench.data import generate_dataset

train_seqs = generate_dataset(4, seed=1, length=8)
eval_seqs = generate_dataset(2, seed=2, length=8)
base = RunConfig().with_overrides(steps=3, batch_size=2, warmup_steps=1)

rows = run_ablation(table_grid(), base, train_seqs, eval_seqs, threshold_px=8.0)
print(format_table(rows))

# multi-cue and single-cue models differ only in where query slot 0 comes from
from vltok.pipeline import init_model

multi = init_model(base.tracker, 20, seed=0)
single = init_model(base.with_overrides(query_mode="single").tracker, 20, seed=0)
print("extra values in the multi-cue model:", multi.num_values() - single.num_values(), "= C*d =", 64 * 64)
