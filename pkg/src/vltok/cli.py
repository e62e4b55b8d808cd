"""Command-line entry point: ``vltok <subcommand> [options]``.

Configuration precedence is preset defaults < ``--config FILE`` <
``--set KEY=VALUE`` < dedicated flags such as ``--seed`` or ``--steps``.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bench.ablation import format_table, run_ablation, table_grid, write_table
from .bench.data import (
    format_boxes,
    generate_dataset,
    load_dataset,
    load_sequence,
    read_boxes,
    save_dataset,
)
from .bench.metrics import evaluate
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import PRESETS, RunConfig, load_config, parse_config_text
from .gradcheck import TOLERANCE, run_gradcheck
from .pipeline import Tracker, init_model, train
from .textenc import build_vocab


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override one config key")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vltok", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic benchmark to disk")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--num", type=int, default=8)
    p.add_argument("--difficulty", choices=("easy", "hard"), default="easy")
    p.add_argument("--frame-size", type=int, default=128)
    p.add_argument("--length", type=int, default=30)

    p = sub.add_parser("train", help="train a tracker and save a checkpoint")
    _common(p)
    p.add_argument("--data", help="training dataset directory (or train_data in the config)")
    p.add_argument("--out", help="checkpoint path (or out in the config)")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log-every", type=int, default=100)

    p = sub.add_parser("track", help="run a checkpoint over one sequence or a dataset")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--seq", help="one sequence directory; writes --out")
    src.add_argument("--data", help="dataset directory; writes <name>.txt into --out")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _common(p)
    p.add_argument("--pred", help="prediction file or directory of <name>.txt files")
    p.add_argument("--gt", help="ground-truth file (with --pred FILE)")
    p.add_argument("--data", help="dataset directory (with --pred DIR)")
    p.add_argument("--threshold", type=float, default=20.0, help="center-error threshold in pixels")
    p.add_argument("--report", help="write report.json here")
    p.add_argument("--curves", help="write curves.csv here")

    p = sub.add_parser("ablate", help="train/evaluate a grid over query mode, box format and bins")
    _common(p)
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--eval-data", required=True)
    p.add_argument("--bins", default="50,100,500,1000")
    p.add_argument("--formats", default="corner,center")
    p.add_argument("--queries", default="multi,single")
    p.add_argument("--steps", type=int)
    p.add_argument("--threshold", type=float, default=20.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV table path")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    _common(p)
    p.add_argument("--samples", type=int, default=3, help="entries checked per parameter tensor")

    p = sub.add_parser("bench-speed", help="measure tracking throughput (frames/s)")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--frames", type=int, default=30)
    return parser


def resolve_config(args) -> RunConfig:
    run = PRESETS[args.preset]
    if args.config:
        run = load_config(args.config, base=run)
    if args.set:
        run = RunConfig.from_flat(parse_config_text("\n".join(args.set)), base=run)
    extra = {}
    if args.seed is not None:
        extra["seed"] = args.seed
    for flag, key in (("steps", "steps"), ("batch_size", "batch_size")):
        if getattr(args, flag, None) is not None:
            extra[key] = getattr(args, flag)
    return run.with_overrides(**extra) if extra else run


def cmd_gen_data(args, run: RunConfig) -> int:
    seqs = generate_dataset(args.num, run.tracker.seed, args.difficulty, args.frame_size, args.length)
    save_dataset(seqs, Path(args.out))
    print(f"wrote {len(seqs)} sequences to {args.out}")
    return 0


def cmd_train(args, run: RunConfig) -> int:
    data = args.data or run.train.train_data
    out = args.out or run.train.out
    if not data or not out:
        raise UsageError("train needs --data and --out (or train_data / out in the config)")
    seqs = load_dataset(Path(data))
    start = time.time()

    def log(step, loss):
        print(f"step {step:6d}  loss {loss:.4f}  {time.time() - start:7.1f}s", flush=True)

    result = train(seqs, run, log=log, log_every=args.log_every)
    save_checkpoint(result.params, result.text_vocab, run, out)
    print(f"saved {out}")
    return 0


def _tracker_from(path: str, overrides: dict | None = None) -> tuple:
    params, vocab, run = load_checkpoint(path, overrides)
    return Tracker(params, vocab, run.tracker), run


def cmd_track(args, run: RunConfig) -> int:
    tracker, _ = _tracker_from(args.checkpoint)
    seqs = [load_sequence(Path(args.seq))] if args.seq else load_dataset(Path(args.data))
    out = Path(args.out)
    if args.data:
        out.mkdir(parents=True, exist_ok=True)
    for seq in seqs:
        pred = tracker.track_video(seq.frames, seq.caption, seq.gt_boxes[0])
        target = out / f"{seq.name}.txt" if args.data else out
        target.write_text(format_boxes(pred))
    print(f"tracked {len(seqs)} sequence(s)")
    return 0


def cmd_eval(args, run: RunConfig) -> int:
    if args.pred and args.gt:
        results = [("sequence", read_boxes(Path(args.pred)), read_boxes(Path(args.gt)), ())]
    elif args.pred and args.data:
        results = []
        for seq in load_dataset(Path(args.data)):
            results.append((seq.name, read_boxes(Path(args.pred) / f"{seq.name}.txt"), seq.gt_boxes, seq.attributes))
    else:
        raise UsageError("eval needs --pred with either --gt or --data")
    report = evaluate(results, args.threshold)
    report.write(args.report, args.curves)
    print(f"AUC {report.auc:.6f}  P_norm {report.norm_precision:.6f}  P {report.precision:.6f}")
    return 0


def cmd_ablate(args, run: RunConfig) -> int:
    grid = table_grid(
        bins=[int(b) for b in args.bins.split(",")],
        formats=args.formats.split(","),
        queries=args.queries.split(","),
    )
    rows = run_ablation(
        grid, run, load_dataset(Path(args.data)), load_dataset(Path(args.eval_data)), args.threshold, args.workers
    )
    print(format_table(rows))
    if args.out:
        write_table(rows, Path(args.out))
    return 0


def cmd_gradcheck(args, run: RunConfig) -> int:
    worst, errors = run_gradcheck(run.tracker, samples_per_param=args.samples, seed=run.tracker.seed)
    name = max(errors, key=errors.get)
    print(f"max relative error {worst:.3e} ({name}) over {len(errors)} parameter tensors")
    return 0 if worst <= TOLERANCE else 1


def cmd_bench_speed(args, run: RunConfig) -> int:
    seq = generate_dataset(1, run.tracker.seed, "easy", length=args.frames + 1)[0]
    if args.checkpoint:
        tracker, run = _tracker_from(args.checkpoint)
    else:
        vocab = build_vocab([seq.caption])
        tracker = Tracker(init_model(run.tracker, vocab.size), vocab, run.tracker)
    start = time.perf_counter()
    tracker.track_video(seq.frames, seq.caption, seq.gt_boxes[0])
    elapsed = time.perf_counter() - start
    print(f"{args.frames / elapsed:.2f} frames/s ({args.frames} frames, {elapsed:.2f}s)")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "track": cmd_track,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "bench-speed": cmd_bench_speed,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on unknown subcommands/flags
    try:
        run = resolve_config(args)
        return COMMANDS[args.command](args, run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, KeyError, ValueError, FileNotFoundError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
