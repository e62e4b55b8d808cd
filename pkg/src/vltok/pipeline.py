"""The tracker: crop geometry, model assembly, training and video inference."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, TrackerConfig, TrainSettings
from .decoder import decoder_forward, greedy_decode, head_logits, init_decoder
from .fusion import fuse_vl, init_fusion, reduce_channels
from .numerics import (
    OptimHyper,
    ParamStore,
    Tensor,
    adamw_step,
    cross_entropy,
    grad,
    no_grad,
)
from .seqtok import (
    Box,
    TokenVocab,
    box_to_tokens,
    build_conditional_queries,
    init_queries,
    tokens_to_box,
)
from .textenc import (
    TextVocab,
    build_vocab,
    encode_text,
    init_text_encoder,
    pad_batch,
    pool_sentence,
    tokenize,
)
from .visenc import encode_visual, init_visual_encoder

# ---------------------------------------------------------------------------
# crop geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CropTransform:
    """frame -> crop is ``u = (x - x0) * scale``, likewise for y."""

    x0: float
    y0: float
    scale: float
    out_size: int

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("degenerate crop transform (scale must be positive)")

    def to_crop(self, x: float, y: float) -> tuple:
        return ((x - self.x0) * self.scale, (y - self.y0) * self.scale)

    def to_frame(self, u: float, v: float) -> tuple:
        return (u / self.scale + self.x0, v / self.scale + self.y0)


def as_float_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64, copy=False)


def crop_region(frame: np.ndarray, box: Box, factor: float, out_size: int) -> tuple[np.ndarray, CropTransform]:
    """Square crop of side ``factor * sqrt(w h)`` centred on ``box``, resized to ``out_size``.

    Pixels outside the frame take the frame's mean colour; resampling is
    bilinear at pixel centres.
    """
    if factor < 1:
        raise ValueError("context factor must be >= 1")
    w, h = box.width, box.height
    if w <= 0 or h <= 0:
        raise ValueError("cannot crop around a box with zero area")
    frame = as_float_image(frame)
    H, W = frame.shape[:2]
    cx, cy = box.center
    side = factor * math.sqrt(w * h)
    tr = CropTransform(cx - side / 2, cy - side / 2, out_size / side, out_size)

    grid = (np.arange(out_size) + 0.5) / tr.scale - 0.5
    px = tr.x0 + grid
    py = tr.y0 + grid
    x_lo = np.floor(px).astype(np.int64)
    y_lo = np.floor(py).astype(np.int64)
    fx = (px - x_lo)[None, :, None]
    fy = (py - y_lo)[:, None, None]
    fill = frame.reshape(-1, frame.shape[2]).mean(axis=0)

    def gather(yi, xi):
        vy = (yi >= 0) & (yi < H)
        vx = (xi >= 0) & (xi < W)
        vals = frame[np.clip(yi, 0, H - 1)[:, None], np.clip(xi, 0, W - 1)[None, :]]
        return np.where((vy[:, None] & vx[None, :])[..., None], vals, fill)

    out = (
        gather(y_lo, x_lo) * (1 - fy) * (1 - fx)
        + gather(y_lo, x_lo + 1) * (1 - fy) * fx
        + gather(y_lo + 1, x_lo) * fy * (1 - fx)
        + gather(y_lo + 1, x_lo + 1) * fy * fx
    )
    return out, tr


def box_frame_to_search(box: Box, tr: CropTransform) -> Box:
    x1, y1, x2, y2 = box.to_corner().values
    u1, v1 = tr.to_crop(x1, y1)
    u2, v2 = tr.to_crop(x2, y2)
    return Box(u1, v1, u2, v2, "corner").to_format(box.fmt)


def box_search_to_frame(box: Box, tr: CropTransform) -> Box:
    u1, v1, u2, v2 = box.to_corner().values
    x1, y1 = tr.to_frame(u1, v1)
    x2, y2 = tr.to_frame(u2, v2)
    return Box(x1, y1, x2, y2, "corner").to_format(box.fmt)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def _populate(ps: ParamStore, rng, cfg: TrackerConfig, text_vocab_size: int) -> ParamStore:
    init_visual_encoder(ps, rng, cfg)
    init_text_encoder(ps, rng, cfg, text_vocab_size)
    init_fusion(ps, rng, cfg)
    init_queries(ps, rng, cfg)
    init_decoder(ps, rng, cfg)
    return ps


def init_model(cfg: TrackerConfig, text_vocab_size: int, seed: int | None = None) -> ParamStore:
    """Truncated-normal weights (std 0.02), zero biases, unit norms; seeded by ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return _populate(ParamStore(), rng, cfg, text_vocab_size)


class _ShapeRecorder(ParamStore):
    def add(self, name, value):
        if name in self.shapes:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.shapes[name] = tuple(np.shape(value))


class _ZeroRng:
    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.zeros(size)


def expected_shapes(cfg: TrackerConfig, text_vocab_size: int) -> dict:
    """Parameter name -> shape for a config, without materialising the weights."""
    rec = _ShapeRecorder()
    rec.shapes = {}
    _populate(rec, _ZeroRng(), cfg, text_vocab_size)
    return rec.shapes


def fuse_inputs(
    z: np.ndarray, x: np.ndarray, f_l: Tensor, text_valid: np.ndarray, ps: ParamStore, cfg: TrackerConfig
) -> tuple[Tensor, np.ndarray]:
    """Visual encoding + fusion with already-encoded text; returns (F_vl, memory validity)."""
    f_v = encode_visual(z, x, ps, cfg)
    f_vl = fuse_vl(reduce_channels(f_v, ps, "vis"), reduce_channels(f_l, ps, "text"), ps, cfg, text_valid)
    vis_valid = np.ones((f_v.shape[0], f_v.shape[1]), dtype=bool)
    return f_vl, np.concatenate([vis_valid, text_valid], axis=1)


@dataclass
class TrainBatch:
    """B template/search/caption triplets with ground-truth boxes in search coordinates."""

    templates: np.ndarray  # (B, Hz, Wz, 3) in [0, 1]
    searches: np.ndarray  # (B, Hx, Wx, 3)
    captions: list
    boxes: list  # Box per sample, search-crop pixels

    def __len__(self) -> int:
        return len(self.captions)


def target_tokens(boxes: Sequence[Box], cfg: TrackerConfig) -> np.ndarray:
    """(B, 5) coordinate tokens followed by EOS; boxes are clamped to the crop first."""
    vocab = TokenVocab(cfg.bins)
    s = cfg.search_size
    rows = []
    for b in boxes:
        b = b.to_corner().clip(s, s)
        rows.append([*box_to_tokens(b, s, vocab, cfg.box_format), vocab.eos])
    return np.array(rows, dtype=np.int64)


def teacher_forced_logits(batch: TrainBatch, ps: ParamStore, cfg: TrackerConfig, text_vocab: TextVocab) -> tuple:
    if len(batch) == 0:
        raise ValueError("empty batch")
    ids, valid = pad_batch([tokenize(c, text_vocab, cfg.max_text_len) for c in batch.captions])
    f_l = encode_text(ids, valid, ps, cfg)
    pooled = pool_sentence(f_l, valid) if cfg.query_mode == "multi" else None
    f_vl, mem_valid = fuse_inputs(batch.templates, batch.searches, f_l, valid, ps, cfg)
    targets = target_tokens(batch.boxes, cfg)
    queries = build_conditional_queries(pooled, targets[:, :4], ps, cfg, batch=len(batch))
    logits = head_logits(decoder_forward(f_vl, queries, ps, cfg, mem_valid), ps)
    return logits, targets


def batch_loss(batch: TrainBatch, ps: ParamStore, cfg: TrackerConfig, text_vocab: TextVocab) -> tuple:
    """Mean cross-entropy over the batch and all five target positions."""
    logits, targets = teacher_forced_logits(batch, ps, cfg, text_vocab)
    return cross_entropy(logits.reshape(-1, cfg.bins + 1), targets.reshape(-1)), logits, targets


def train_step(
    batch: TrainBatch, ps: ParamStore, cfg: TrackerConfig, hyper: OptimHyper, text_vocab: TextVocab
) -> float:
    loss, _, _ = batch_loss(batch, ps, cfg, text_vocab)
    if not math.isfinite(float(loss.data)):
        raise FloatingPointError("loss is not finite")
    adamw_step(ps, grad(loss, ps), hyper)
    return float(loss.data)


def token_accuracy(batch: TrainBatch, ps: ParamStore, cfg: TrackerConfig, text_vocab: TextVocab) -> tuple:
    """Teacher-forced (accuracy over all 5 positions, mean loss)."""
    with no_grad():
        loss, logits, targets = batch_loss(batch, ps, cfg, text_vocab)
    pred = np.argmax(logits.data, axis=-1)
    return float((pred == targets).mean()), float(loss.data)


# ---------------------------------------------------------------------------
# training data
# ---------------------------------------------------------------------------


def sample_pair(seq, rng: np.random.Generator, cfg: TrackerConfig, settings: TrainSettings) -> tuple:
    """One (template, search, caption, search-frame box) triplet from a sequence.

    The search crop is centred on the ground truth shifted by up to
    ``center_jitter * sqrt(w h)`` per axis and rescaled by ``exp(U(-scale_jitter, scale_jitter))``.
    """
    n = len(seq.frames)
    i = int(rng.integers(n))
    j = int(np.clip(i + rng.integers(-settings.max_frame_gap, settings.max_frame_gap + 1), 0, n - 1))
    tb = seq.gt_boxes[i]
    z, _ = crop_region(seq.frames[i], tb, cfg.template_factor, cfg.template_size)
    sb = seq.gt_boxes[j]
    size = math.sqrt(sb.area())
    cx, cy = sb.center
    cx += rng.uniform(-1, 1) * settings.center_jitter * size
    cy += rng.uniform(-1, 1) * settings.center_jitter * size
    k = math.exp(rng.uniform(-settings.scale_jitter, settings.scale_jitter))
    anchor = Box(cx, cy, sb.width * k, sb.height * k, "center")
    x, tr = crop_region(seq.frames[j], anchor, cfg.search_factor, cfg.search_size)
    return z, x, seq.caption, box_frame_to_search(sb.to_corner(), tr)


def make_batch(sequences: Sequence, rng: np.random.Generator, cfg: TrackerConfig, settings: TrainSettings, size: int):
    picks = rng.integers(len(sequences), size=size)
    samples = [sample_pair(sequences[int(p)], rng, cfg, settings) for p in picks]
    return TrainBatch(
        templates=np.stack([s[0] for s in samples]),
        searches=np.stack([s[1] for s in samples]),
        captions=[s[2] for s in samples],
        boxes=[s[3] for s in samples],
    )


def learning_rate_at(step: int, base: float, settings: TrainSettings) -> float:
    """Linear warmup, then a single drop by ``lr_drop_factor`` at ``lr_drop_at`` of the run."""
    lr = base
    if settings.warmup_steps and step < settings.warmup_steps:
        lr = base * (step + 1) / settings.warmup_steps
    if step >= int(settings.lr_drop_at * settings.steps):
        lr *= settings.lr_drop_factor
    return lr


def with_lr(hyper: OptimHyper, lr: float) -> OptimHyper:
    return OptimHyper(lr, hyper.beta1, hyper.beta2, hyper.eps, hyper.weight_decay)


@dataclass
class TrainResult:
    params: ParamStore
    text_vocab: TextVocab
    losses: list


def train(
    sequences: Sequence,
    run: RunConfig,
    text_vocab: TextVocab | None = None,
    params: ParamStore | None = None,
    log: Callable[[int, float], None] | None = None,
    log_every: int = 100,
) -> TrainResult:
    """Train on randomly sampled pairs; all randomness comes from ``run.tracker.seed``."""
    cfg = run.tracker
    if not sequences:
        raise ValueError("no training sequences")
    text_vocab = text_vocab or build_vocab([s.caption for s in sequences])
    ps = params or init_model(cfg, text_vocab.size)
    rng = np.random.default_rng([cfg.seed, 1])
    losses = []
    for step in range(run.train.steps):
        batch = make_batch(sequences, rng, cfg, run.train, run.train.batch_size)
        hyper = with_lr(run.optim, learning_rate_at(step, run.optim.learning_rate, run.train))
        losses.append(train_step(batch, ps, cfg, hyper, text_vocab))
        if log and (step % log_every == 0 or step == run.train.steps - 1):
            log(step, float(np.mean(losses[-log_every:])))
    return TrainResult(ps, text_vocab, losses)


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


class Tracker:
    """Frame-by-frame inference on an immutable parameter snapshot."""

    def __init__(self, params: ParamStore, text_vocab: TextVocab, cfg: TrackerConfig):
        self.params = params
        self.text_vocab = text_vocab
        self.cfg = cfg
        self.vocab = TokenVocab(cfg.bins)
        self.eos_seen: list[bool] = []

    def predict_in_search(self, z: np.ndarray, x: np.ndarray, f_l: Tensor, valid: np.ndarray) -> Box:
        cfg = self.cfg
        with no_grad():
            pooled = pool_sentence(f_l, valid) if cfg.query_mode == "multi" else None
            f_vl, mem_valid = fuse_inputs(z[None], x[None], f_l, valid, self.params, cfg)
            tokens, eos = greedy_decode(f_vl, pooled, self.params, cfg, mem_valid)
        self.eos_seen.append(bool(eos[0]))
        return tokens_to_box(tokens[0], cfg.search_size, self.vocab, cfg.box_format)

    def track_video(self, frames: Sequence[np.ndarray], caption: str, init_box: Box) -> list:
        """Corner-format frame boxes, one per frame; ``out[0]`` is ``init_box``."""
        if len(frames) == 0:
            raise ValueError("no frames")
        init_box = init_box.to_corner()
        if init_box.area() <= 0:
            raise ValueError("initial box must have positive area")
        cfg = self.cfg
        H, W = np.asarray(frames[0]).shape[:2]
        z, _ = crop_region(frames[0], init_box, cfg.template_factor, cfg.template_size)
        ids = tokenize(caption, self.text_vocab, cfg.max_text_len)
        valid = np.ones((1, len(ids)), dtype=bool)
        with no_grad():
            f_l = encode_text(np.array([ids]), valid, self.params, cfg)
        out = [init_box]
        for frame in frames[1:]:
            prev = out[-1]
            anchor = Box(*prev.center, max(prev.width, 1.0), max(prev.height, 1.0), "center")
            x, tr = crop_region(frame, anchor, cfg.search_factor, cfg.search_size)
            pred = box_search_to_frame(self.predict_in_search(z, x, f_l, valid).to_corner(), tr)
            out.append(pred.clip(W, H))
        return out


def track_video(frames, caption: str, init_box: Box, params: ParamStore, text_vocab: TextVocab, cfg: TrackerConfig):
    return Tracker(params, text_vocab, cfg).track_video(frames, caption, init_box)
