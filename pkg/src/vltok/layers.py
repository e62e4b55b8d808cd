"""Transformer building blocks shared by the encoders and the decoder.

Layers are plain functions over a ``ParamStore`` and a name prefix.  All
sequence tensors are batch-first: (B, N, width).  Sublayers are pre-norm
with residual connections.
"""

from __future__ import annotations

import numpy as np

from .numerics import (
    ParamStore,
    Tensor,
    attention,
    gelu,
    layer_norm,
    linear,
    truncated_normal,
)

LN_EPS = 1e-5


def init_linear(ps: ParamStore, rng: np.random.Generator, name: str, n_in: int, n_out: int) -> None:
    ps.add(f"{name}.w", truncated_normal(rng, (n_in, n_out)))
    ps.add(f"{name}.b", np.zeros(n_out))


def apply_linear(x: Tensor, ps: ParamStore, name: str) -> Tensor:
    return linear(x, ps[f"{name}.w"], ps[f"{name}.b"])


def init_norm(ps: ParamStore, name: str, n: int) -> None:
    ps.add(f"{name}.gamma", np.ones(n))
    ps.add(f"{name}.beta", np.zeros(n))


def apply_norm(x: Tensor, ps: ParamStore, name: str) -> Tensor:
    return layer_norm(x, ps[f"{name}.gamma"], ps[f"{name}.beta"], LN_EPS)


def init_attention(ps: ParamStore, rng, name: str, d: int) -> None:
    for part in ("q", "v", "o"):
        init_linear(ps, rng, f"{name}.{part}", d, d)
    # a key bias shifts every score of a query equally, so softmax ignores it
    ps.add(f"{name}.k.w", truncated_normal(rng, (d, d)))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, N, d = x.shape
    return x.reshape(B, N, heads, d // heads).transpose(0, 2, 1, 3)


def multi_head_attention(
    x: Tensor, memory: Tensor, ps: ParamStore, name: str, heads: int, mask: np.ndarray | None = None
) -> Tensor:
    """Queries from ``x`` (B, n, d), keys/values from ``memory`` (B, m, d).

    ``mask`` is boolean, broadcastable to (B, n, m); True = may attend.
    """
    B, n, d = x.shape
    if d % heads:
        raise ValueError(f"width {d} not divisible by {heads} heads")
    q = _split_heads(apply_linear(x, ps, f"{name}.q"), heads)
    k = _split_heads(memory @ ps[f"{name}.k.w"], heads)
    v = _split_heads(apply_linear(memory, ps, f"{name}.v"), heads)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        mask = mask[:, None] if mask.ndim == 3 else mask
    out = attention(q, k, v, mask)
    out = out.transpose(0, 2, 1, 3).reshape(B, n, d)
    return apply_linear(out, ps, f"{name}.o")


def init_mlp(ps: ParamStore, rng, name: str, d: int, hidden: int) -> None:
    init_linear(ps, rng, f"{name}.fc1", d, hidden)
    init_linear(ps, rng, f"{name}.fc2", hidden, d)


def apply_mlp(x: Tensor, ps: ParamStore, name: str) -> Tensor:
    return apply_linear(gelu(apply_linear(x, ps, f"{name}.fc1")), ps, f"{name}.fc2")


def init_encoder_layer(ps: ParamStore, rng, name: str, d: int, ff: int) -> None:
    init_norm(ps, f"{name}.ln1", d)
    init_attention(ps, rng, f"{name}.attn", d)
    init_norm(ps, f"{name}.ln2", d)
    init_mlp(ps, rng, f"{name}.mlp", d, ff)


def encoder_layer(x: Tensor, ps: ParamStore, name: str, heads: int, mask: np.ndarray | None = None) -> Tensor:
    h = apply_norm(x, ps, f"{name}.ln1")
    x = x + multi_head_attention(h, h, ps, f"{name}.attn", heads, mask)
    return x + apply_mlp(apply_norm(x, ps, f"{name}.ln2"), ps, f"{name}.mlp")


def init_encoder(ps: ParamStore, rng, name: str, depth: int, d: int, ff: int) -> None:
    for i in range(depth):
        init_encoder_layer(ps, rng, f"{name}.layer{i}", d, ff)
    init_norm(ps, f"{name}.ln_out", d)


def encoder(x: Tensor, ps: ParamStore, name: str, depth: int, heads: int, mask: np.ndarray | None = None) -> Tensor:
    for i in range(depth):
        x = encoder_layer(x, ps, f"{name}.layer{i}", heads, mask)
    return apply_norm(x, ps, f"{name}.ln_out")


def sinusoidal_encoding(n: int, d: int) -> np.ndarray:
    """Fixed 1-D sine/cosine table of shape (n, d)."""
    pos = np.arange(n)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / np.power(10000.0, i / d)
    out = np.zeros((n, d))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : d // 2])
    return out


def key_padding_mask(valid: np.ndarray, n_query: int | None = None) -> np.ndarray:
    """(B, m) validity flags -> (B, n, m) attention mask."""
    valid = np.asarray(valid, dtype=bool)
    n = valid.shape[1] if n_query is None else n_query
    return np.broadcast_to(valid[:, None, :], (valid.shape[0], n, valid.shape[1]))


def check_heads(d: int, heads: int) -> None:
    if heads < 1 or d % heads:
        raise ValueError(f"width {d} must be divisible by head count {heads}")


__all__ = [
    "apply_linear",
    "apply_mlp",
    "apply_norm",
    "check_heads",
    "encoder",
    "encoder_layer",
    "init_attention",
    "init_encoder",
    "init_encoder_layer",
    "init_linear",
    "init_mlp",
    "init_norm",
    "key_padding_mask",
    "multi_head_attention",
    "sinusoidal_encoding",
]
