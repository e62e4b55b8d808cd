"""Boxes as coordinate tokens, and the decoder's conditional query sequence.

Coordinates live in the search-crop frame, ``[0, s]``.  Each one is mapped
to one of ``K`` bins, ``round(v / s * K)`` clamped to ``[0, K-1]`` so the top
edge never lands on the EOS id ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TrackerConfig
from .layers import init_linear
from .numerics import ParamStore, Tensor, concat, linear, truncated_normal

SEQ_LEN = 5  # 4 coordinates + EOS


@dataclass(frozen=True)
class Box:
    """Four floats plus a format tag: ``corner`` (x1, y1, x2, y2) or ``center`` (cx, cy, w, h)."""

    a: float
    b: float
    c: float
    d: float
    fmt: str = "corner"

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.fmt == "corner":
            if self.a > self.c or self.b > self.d:
                raise ValueError(f"corner box needs x1<=x2 and y1<=y2, got {vals}")
        elif self.fmt == "center":
            if self.c < 0 or self.d < 0:
                raise ValueError(f"center box needs w,h >= 0, got {vals}")
        else:
            raise ValueError(f"unknown box format {self.fmt!r}")

    @classmethod
    def from_xywh(cls, x, y, w, h) -> Box:
        return cls(x, y, x + w, y + h, "corner")

    @property
    def values(self) -> tuple:
        return (self.a, self.b, self.c, self.d)

    def to_corner(self) -> Box:
        if self.fmt == "corner":
            return self
        cx, cy, w, h = self.values
        return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, "corner")

    def to_center(self) -> Box:
        if self.fmt == "center":
            return self
        x1, y1, x2, y2 = self.values
        return Box((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1, "center")

    def to_format(self, fmt: str) -> Box:
        return self.to_corner() if fmt == "corner" else self.to_center()

    def to_xywh(self) -> tuple:
        x1, y1, x2, y2 = self.to_corner().values
        return (x1, y1, x2 - x1, y2 - y1)

    @property
    def width(self) -> float:
        return self.to_center().c

    @property
    def height(self) -> float:
        return self.to_center().d

    @property
    def center(self) -> tuple:
        c = self.to_center()
        return (c.a, c.b)

    def area(self) -> float:
        return self.width * self.height

    def clip(self, x_max: float, y_max: float, x_min: float = 0.0, y_min: float = 0.0) -> Box:
        x1, y1, x2, y2 = self.to_corner().values
        x1, x2 = (min(max(v, x_min), x_max) for v in (x1, x2))
        y1, y2 = (min(max(v, y_min), y_max) for v in (y1, y2))
        return Box(x1, y1, x2, y2, "corner").to_format(self.fmt)


@dataclass(frozen=True)
class TokenVocab:
    """Coordinate ids ``0..K-1`` followed by a single EOS id ``K``."""

    bins: int

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("need at least 2 bins")

    @property
    def eos(self) -> int:
        return self.bins

    @property
    def size(self) -> int:
        return self.bins + 1

    def is_coord(self, token: int) -> bool:
        return 0 <= token < self.bins


def quantize_coord(v: float, s: float, bins: int) -> int:
    if not math.isfinite(v):
        raise ValueError(f"cannot quantise non-finite coordinate {v}")
    if s <= 0 or bins < 2:
        raise ValueError("need s > 0 and bins >= 2")
    # np.rint rounds half to even, same as python round()
    return int(min(max(np.rint(v / s * bins), 0), bins - 1))


def dequantize_coord(token: int, s: float, bins: int) -> float:
    if not 0 <= token < bins:
        raise ValueError(f"token {token} is not a coordinate id in [0, {bins})")
    return token * s / bins


def box_to_tokens(box: Box, s: float, vocab: TokenVocab, fmt: str | None = None) -> tuple:
    """Quantise a search-frame box in its own format (or ``fmt`` if given)."""
    box = box.to_format(fmt or box.fmt)
    return tuple(quantize_coord(v, s, vocab.bins) for v in box.values)


def tokens_to_box(tokens, s: float, vocab: TokenVocab, fmt: str = "corner") -> Box:
    tokens = [int(t) for t in tokens]
    if len(tokens) != 4:
        raise ValueError("a box needs exactly 4 tokens")
    if vocab.eos in tokens:
        raise ValueError("EOS cannot be decoded as a coordinate")
    a, b, c, d = (dequantize_coord(t, s, vocab.bins) for t in tokens)
    if fmt == "corner":
        return Box(min(a, c), min(b, d), max(a, c), max(b, d), "corner")
    return Box(a, b, max(c, 0.0), max(d, 0.0), "center")


# ---------------------------------------------------------------------------
# conditional queries
# ---------------------------------------------------------------------------


def init_queries(ps: ParamStore, rng: np.random.Generator, cfg: TrackerConfig) -> None:
    d = cfg.model_dim
    if cfg.query_mode == "multi":
        init_linear(ps, rng, "query.text", cfg.channels, d)
    else:
        ps.add("query.start", truncated_normal(rng, (d,)))
    ps.add("query.coord_embed", truncated_normal(rng, (cfg.bins, d)))
    ps.add("query.pos", truncated_normal(rng, (SEQ_LEN, d)))


def build_conditional_queries(
    pooled_text: Tensor | None, prev_tokens, ps: ParamStore, cfg: TrackerConfig, batch: int | None = None
) -> Tensor:
    """(B, 1 + k, d) query prefix: one language/start slot then k coordinate embeddings.

    ``prev_tokens`` is an integer array of shape (B, k) with 0 <= k <= 4.
    """
    prev = np.asarray(prev_tokens, dtype=np.int64)
    if prev.ndim == 1:
        prev = prev[None, :]
    k = prev.shape[1]
    if k > SEQ_LEN - 1:
        raise ValueError(f"at most {SEQ_LEN - 1} previous tokens, got {k}")
    if prev.size and ((prev < 0).any() or (prev >= cfg.bins).any()):
        raise ValueError("previous tokens must be coordinate ids (EOS is never fed back)")

    if cfg.query_mode == "multi":
        if pooled_text is None:
            raise ValueError("multi-cue queries need the pooled sentence feature")
        first = linear(pooled_text, ps["query.text.w"], ps["query.text.b"])
        B = first.shape[0]
        first = first.reshape(B, 1, cfg.model_dim)
    else:
        B = batch if batch is not None else (pooled_text.shape[0] if pooled_text is not None else prev.shape[0])
        start = ps["query.start"].reshape(1, 1, cfg.model_dim)
        first = start + np.zeros((B, 1, cfg.model_dim))
    if k and prev.shape[0] != B:
        raise ValueError("batch size mismatch between text and previous tokens")
    slots = first if k == 0 else concat([first, ps["query.coord_embed"][prev]], axis=1)
    return slots + ps["query.pos"][: k + 1]
