"""Word-level caption vocabulary and a small trainable text transformer."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .config import TrackerConfig
from .layers import encoder, init_encoder, key_padding_mask
from .numerics import ParamStore, Tensor, truncated_normal

PAD, UNK = 0, 1
_PUNCT = re.compile(r"[^\w\s]")


def normalize(sentence: str) -> list[str]:
    return _PUNCT.sub(" ", sentence.lower()).split()


@dataclass(frozen=True)
class TextVocab:
    words: tuple = ()  # non-reserved words in id order, starting at id 2
    index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {w: i + 2 for i, w in enumerate(self.words)})

    @property
    def size(self) -> int:
        return len(self.words) + 2

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK)

    def to_list(self) -> list:
        return ["<pad>", "<unk>", *self.words]

    @classmethod
    def from_list(cls, items: list) -> TextVocab:
        if items[:2] != ["<pad>", "<unk>"]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        return cls(tuple(items[2:]))


def build_vocab(corpus, min_freq: int = 1) -> TextVocab:
    """Case-folded, punctuation-free words seen at least ``min_freq`` times, sorted."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(w for s in corpus for w in normalize(s))
    return TextVocab(tuple(sorted(w for w, n in counts.items() if n >= min_freq)))


def tokenize(sentence: str, vocab: TextVocab, max_len: int | None = None) -> list[int]:
    """Word ids; sentences longer than ``max_len`` are truncated."""
    words = normalize(sentence)
    if not words:
        raise ValueError("sentence is empty after normalisation")
    ids = [vocab.lookup(w) for w in words]
    return ids[:max_len] if max_len else ids


def pad_batch(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    n = max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), PAD, dtype=np.int64)
    valid = np.zeros((len(seqs), n), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        valid[i, : len(s)] = True
    return ids, valid


def init_text_encoder(ps: ParamStore, rng: np.random.Generator, cfg: TrackerConfig, vocab_size: int) -> None:
    C = cfg.channels
    ps.add("text.embed", truncated_normal(rng, (vocab_size, C)))
    ps.add("text.pos", truncated_normal(rng, (cfg.max_text_len, C)))
    init_encoder(ps, rng, "text.enc", cfg.text_depth, C, cfg.ff_mult * C)


def encode_text(ids: np.ndarray, valid: np.ndarray, ps: ParamStore, cfg: TrackerConfig) -> Tensor:
    """(B, N_l) word ids -> (B, N_l, C) token features; padded rows are not attended to."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise ValueError("expected a non-empty (B, N) id batch")
    if ids.shape[1] > cfg.max_text_len:
        raise ValueError(f"text longer than max_text_len={cfg.max_text_len}")
    x = ps["text.embed"][ids] + ps["text.pos"][: ids.shape[1]]
    return encoder(x, ps, "text.enc", cfg.text_depth, cfg.text_heads, key_padding_mask(valid))


def encode_sentence(sentence: str, vocab: TextVocab, ps: ParamStore, cfg: TrackerConfig) -> Tensor:
    ids = tokenize(sentence, vocab, cfg.max_text_len)
    return encode_text(np.array([ids]), np.ones((1, len(ids)), dtype=bool), ps, cfg)


def pool_sentence(f_l: Tensor, valid: np.ndarray | None = None) -> Tensor:
    """Mean over the valid token rows: (B, N, C) -> (B, C)."""
    if f_l.shape[-2] < 1:
        raise ValueError("need at least one token")
    if valid is None:
        return f_l.mean(axis=-2)
    w = np.asarray(valid, dtype=np.float64)
    counts = w.sum(axis=-1, keepdims=True)
    if (counts == 0).any():
        raise ValueError("a sentence has no valid tokens")
    return (f_l * (w / counts)[..., None]).sum(axis=-2)
