import json
import math

import numpy as np
import pytest

from vltok.bench.ablation import (
    AXES,
    COLUMNS,
    format_table,
    run_ablation,
    table_grid,
    write_table,
)
from vltok.bench.data import (
    CAPTION_TEMPLATES,
    COLORS,
    format_boxes,
    generate_dataset,
    load_dataset,
    parse_caption,
    read_boxes,
    read_ppm,
    save_dataset,
    write_ppm,
)
from vltok.bench.metrics import (
    MetricsReport,
    centers,
    evaluate,
    iou,
    normalized_precision,
    precision_score,
    success_auc,
)
from vltok.config import RunConfig
from vltok.seqtok import Box


class TestGenerator:
    def test_deterministic(self):
        a = generate_dataset(3, 5, "hard", length=6)
        b = generate_dataset(3, 5, "hard", length=6)
        for x, y in zip(a, b):
            assert x.frames.tobytes() == y.frames.tobytes()
            assert x.gt_boxes == y.gt_boxes and x.caption == y.caption and x.attributes == y.attributes

    def test_seed_changes_data(self):
        a = generate_dataset(1, 5, length=4)[0]
        b = generate_dataset(1, 6, length=4)[0]
        assert a.frames.tobytes() != b.frames.tobytes()

    def test_easy_has_no_distractor_or_occlusion(self):
        for seq in generate_dataset(40, 3, "easy", length=10):
            assert not seq.attributes & {"distractor", "occlusion", "fast-motion", "scale-variation"}

    def test_hard_produces_attributes(self):
        tags = set().union(*(s.attributes for s in generate_dataset(40, 3, "hard", length=20)))
        assert {"distractor", "occlusion", "fast-motion", "scale-variation"} <= tags

    def test_caption_names_one_object(self):
        for seq in generate_dataset(30, 8, "hard", length=2):
            key = parse_caption(seq.caption)
            assert key == seq.target
            assert [tuple(o) for o in seq.meta["objects"]].count(key) == 1
            assert seq.caption == CAPTION_TEMPLATES[seq.template_id].format(color=key[0], shape=key[1])

    def test_shapes_and_lengths(self):
        seq = generate_dataset(1, 0, frame_size=96, length=7)[0]
        assert seq.frames.shape == (7, 96, 96, 3) and seq.frames.dtype == np.uint8
        assert len(seq.gt_boxes) == 7
        for b in seq.gt_boxes:
            assert 8 * math.sqrt(0.75) - 1e-9 <= b.width <= 32 * math.sqrt(1.33) + 1e-9
            x1, y1, x2, y2 = b.values
            assert 0 <= x1 and x2 <= 96 and 0 <= y1 and y2 <= 96

    def test_target_colour_visible_in_box(self):
        seq = generate_dataset(1, 4, "easy", length=1)[0]
        x1, y1, x2, y2 = (int(round(v)) for v in seq.gt_boxes[0].values)
        patch = seq.frames[0, y1:y2, x1:x2] / 255.0
        col = np.array(COLORS[seq.target[0]])
        assert (np.abs(patch - col).max(axis=-1) < 0.05).mean() > 0.2

    def test_parse_caption_rejects(self):
        with pytest.raises(ValueError):
            parse_caption("the thing")

    def test_invalid(self):
        with pytest.raises(ValueError):
            generate_dataset(0, 1)
        with pytest.raises(ValueError):
            generate_dataset(1, 1, "medium")


class TestDiskFormat:
    def test_ppm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        write_ppm(tmp_path / "a.ppm", img)
        assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n7 5\n255\n")
        assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)

    def test_box_lines(self, tmp_path):
        (tmp_path / "g.txt").write_text(format_boxes([Box.from_xywh(1.5, 2, 3, 4.25)]))
        assert (tmp_path / "g.txt").read_text() == "1.500000,2.000000,3.000000,4.250000\n"
        assert read_boxes(tmp_path / "g.txt")[0].to_xywh() == (1.5, 2.0, 3.0, 4.25)

    def test_dataset_round_trip(self, tmp_path):
        seqs = generate_dataset(2, 9, "hard", length=3)
        save_dataset(seqs, tmp_path)
        assert sorted(p.name for p in (tmp_path / "seq_0000").iterdir()) == [
            "frame_000000.ppm", "frame_000001.ppm", "frame_000002.ppm",
            "groundtruth.txt", "language.txt", "meta.json",
        ]
        meta = json.loads((tmp_path / "seq_0001" / "meta.json").read_text())
        assert meta["seed"] == 9 and meta["frame_size"] == [128, 128]
        back = load_dataset(tmp_path)
        for a, b in zip(seqs, back):
            assert np.array_equal(a.frames, b.frames)
            assert a.caption == b.caption and a.attributes == b.attributes
            np.testing.assert_allclose([x.values for x in a.gt_boxes], [x.values for x in b.gt_boxes], atol=2e-6)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)


# naive per-frame recomputation used as the reference


def naive_iou(p, g):
    ix = max(0.0, min(p[2], g[2]) - max(p[0], g[0]))
    iy = max(0.0, min(p[3], g[3]) - max(p[1], g[1]))
    inter = ix * iy
    union = (p[2] - p[0]) * (p[3] - p[1]) + (g[2] - g[0]) * (g[3] - g[1]) - inter
    return inter / union if union > 0 else 0.0


def naive_auc(ious):
    hits = 0
    for k in range(21):
        tau = k / 20
        hits += sum(1 for v in ious if v > tau)
    return hits / (21 * len(ious))


def naive_precision(pred, gt, thr):
    hits = 0
    for p, g in zip(pred, gt):
        dx = (p[0] + p[2]) / 2 - (g[0] + g[2]) / 2
        dy = (p[1] + p[3]) / 2 - (g[1] + g[3]) / 2
        hits += math.sqrt(dx * dx + dy * dy) <= thr
    return hits / len(pred)


def naive_norm_precision(pred, gt):
    errs = []
    for p, g in zip(pred, gt):
        dx = ((p[0] + p[2]) / 2 - (g[0] + g[2]) / 2) / (g[2] - g[0])
        dy = ((p[1] + p[3]) / 2 - (g[1] + g[3]) / 2) / (g[3] - g[1])
        errs.append(math.hypot(dx, dy))
    hits = sum(1 for k in range(51) for e in errs if e <= k / 100)
    return hits / (51 * len(errs))


def random_boxes(rng, n, lo=1.0):
    xy = rng.uniform(0, 100, size=(n, 2))
    wh = rng.uniform(lo, 40, size=(n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


class TestMetrics:
    def test_iou_examples(self):
        assert iou(Box(0, 0, 2, 2), Box(1, 0, 3, 2)) == pytest.approx(1 / 3, rel=1e-15)
        assert iou(Box(1, 1, 4, 5), Box(1, 1, 4, 5)) == 1.0
        assert iou(Box(0, 0, 1, 1), Box(2, 2, 3, 3)) == 0.0
        assert iou(Box(0, 0, 0, 0), Box(0, 0, 0, 0)) == 0.0

    def test_success_examples(self):
        assert success_auc([1.0] * 7) == 20 / 21
        assert success_auc([0.0] * 7) == 0.0
        assert success_auc([0.5] * 7) == 10 / 21
        with pytest.raises(ValueError):
            success_auc([])

    def test_precision_examples(self):
        g = np.array([[0.0, 0.0], [10.0, 10.0]])
        assert precision_score(g, g, 20) == 1.0
        assert precision_score(g + [20.0, 0.0], g, 20) == 1.0
        assert precision_score(g + [[20.0, 0.0], [40.0, 0.0]], g, 20) == 0.5
        with pytest.raises(ValueError):
            precision_score(g, g[:1])

    def test_norm_precision_examples(self):
        gt = [Box(0, 0, 10, 20)] * 3
        assert normalized_precision(gt, gt) == 1.0
        quarter = [Box(2.5, 0, 12.5, 20)] * 3  # dx/w = 0.25
        assert normalized_precision(quarter, gt) == 26 / 51
        far = [Box(10, 0, 20, 20)] * 3
        assert normalized_precision(far, gt) == 0.0
        with pytest.raises(ValueError):
            normalized_precision(gt, [Box(0, 0, 0, 5)] * 3)

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(2024)
        pred, gt = random_boxes(rng, 1000, lo=0.0), random_boxes(rng, 1000)
        ious = [naive_iou(p, g) for p, g in zip(pred, gt)]
        assert success_auc([iou(p, g) for p, g in zip(pred, gt)]) == naive_auc(ious)
        assert precision_score(centers(pred), centers(gt), 20.0) == naive_precision(pred, gt, 20.0)
        assert normalized_precision(pred, gt) == naive_norm_precision(pred, gt)

    def test_translation_invariance(self):
        rng = np.random.default_rng(7)
        # power-of-two offsets keep every coordinate exactly representable
        pred, gt = np.round(random_boxes(rng, 200) * 64) / 64, np.round(random_boxes(rng, 200) * 64) / 64
        shift = np.array([16.0, -8.0, 16.0, -8.0])
        for fn in (lambda p, g: success_auc([iou(a, b) for a, b in zip(p, g)]), normalized_precision,
                   lambda p, g: precision_score(centers(p), centers(g), 8.0)):
            assert fn(pred, gt) == fn(pred + shift, gt + shift)

    def test_evaluate_report(self, tmp_path):
        gt = [Box(0, 0, 10, 10)] * 4
        off = [Box(0, 0, 10, 10), Box(5, 0, 15, 10), Box(0, 0, 10, 10), Box(30, 30, 40, 40)]
        rep = evaluate([("a", gt, gt, {"occlusion"}), ("b", off, gt, ())], threshold_px=20)
        assert rep.auc == pytest.approx((20 / 21 + success_auc([iou(p, g) for p, g in zip(off, gt)])) / 2)
        assert rep.attributes["occlusion"]["count"] == 1
        rep.write(tmp_path / "report.json", tmp_path / "curves.csv")
        data = json.loads((tmp_path / "report.json").read_text())
        assert set(data) >= {"auc", "precision", "norm_precision", "sequences", "attributes"}
        lines = (tmp_path / "curves.csv").read_text().splitlines()
        assert lines[0] == "threshold,success_rate" and len(lines) == 22
        assert isinstance(rep, MetricsReport)


def test_quantization_trend_unit():
    from vltok.seqtok import TokenVocab, box_to_tokens, tokens_to_box

    rng = np.random.default_rng(0)
    boxes = [Box(*b) for b in np.clip(random_boxes(rng, 200) * 3, 0, 384)]
    means = []
    for k in (10, 100, 1000):
        v = TokenVocab(k)
        means.append(np.mean([iou(tokens_to_box(box_to_tokens(b, 384, v), 384, v), b) for b in boxes]))
    assert means[0] < means[1] < means[2]


class TestAblation:
    def test_grid_axes(self):
        grid = table_grid()
        assert len(grid) == 16
        assert {tuple(sorted(c)) for c in grid} == {tuple(sorted(AXES))}
        assert {c["bins"] for c in grid} == {50, 100, 500, 1000}

    def test_empty_grid(self):
        assert run_ablation([], RunConfig(), [], []) == []

    def test_invalid_cell_rejected_before_training(self):
        with pytest.raises(ValueError):
            run_ablation([{"bins": 100}, {"box_format": "polygon"}], RunConfig(), [], [])

    def test_duplicate_cells_identical(self, tiny_seqs, tmp_path):
        base = RunConfig().with_overrides(steps=2, batch_size=2, warmup_steps=1)
        rows = run_ablation([{"bins": 50}, {"bins": 50}], base, tiny_seqs, tiny_seqs[:1])
        assert rows[0] == rows[1]
        assert list(rows[0]) == list(COLUMNS)
        write_table(rows, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(COLUMNS)
        assert len(format_table(rows).splitlines()) == 3
