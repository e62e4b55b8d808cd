"""Auto-regressive coordinate decoder and the three-layer token head."""

from __future__ import annotations

import numpy as np

from .config import TrackerConfig
from .layers import (
    apply_linear,
    apply_mlp,
    apply_norm,
    init_attention,
    init_linear,
    init_mlp,
    init_norm,
    key_padding_mask,
    multi_head_attention,
    sinusoidal_encoding,
)
from .numerics import ParamStore, Tensor, causal_mask, no_grad, relu
from .seqtok import SEQ_LEN, build_conditional_queries


def init_decoder(ps: ParamStore, rng: np.random.Generator, cfg: TrackerConfig) -> None:
    d = cfg.model_dim
    for i in range(cfg.dec_depth):
        name = f"dec.layer{i}"
        init_norm(ps, f"{name}.ln_self", d)
        init_attention(ps, rng, f"{name}.self", d)
        init_norm(ps, f"{name}.ln_cross", d)
        init_attention(ps, rng, f"{name}.cross", d)
        init_norm(ps, f"{name}.ln_mlp", d)
        init_mlp(ps, rng, f"{name}.mlp", d, cfg.ff_mult * d)
    init_norm(ps, "dec.ln_out", d)
    init_linear(ps, rng, "head.fc1", d, d)
    init_linear(ps, rng, "head.fc2", d, d)
    init_linear(ps, rng, "head.fc3", d, cfg.bins + 1)


def decoder_forward(
    f_vl: Tensor, queries: Tensor, ps: ParamStore, cfg: TrackerConfig, memory_valid: np.ndarray | None = None
) -> Tensor:
    """Hidden states (B, n, d) for a query prefix of length n <= 5."""
    _, n, d = queries.shape
    if not 1 <= n <= SEQ_LEN:
        raise ValueError(f"query prefix length must be in [1, {SEQ_LEN}], got {n}")
    if f_vl.shape[-1] != d:
        raise ValueError("memory width differs from query width")
    memory = f_vl + sinusoidal_encoding(f_vl.shape[1], d)
    self_mask = causal_mask(n)
    cross_mask = None if memory_valid is None else key_padding_mask(memory_valid, n)
    x = queries
    for i in range(cfg.dec_depth):
        name = f"dec.layer{i}"
        h = apply_norm(x, ps, f"{name}.ln_self")
        x = x + multi_head_attention(h, h, ps, f"{name}.self", cfg.dec_heads, self_mask)
        h = apply_norm(x, ps, f"{name}.ln_cross")
        x = x + multi_head_attention(h, memory, ps, f"{name}.cross", cfg.dec_heads, cross_mask)
        x = x + apply_mlp(apply_norm(x, ps, f"{name}.ln_mlp"), ps, f"{name}.mlp")
    return apply_norm(x, ps, "dec.ln_out")


def head_logits(hidden: Tensor, ps: ParamStore) -> Tensor:
    """d -> d -> d -> K+1 with ReLU between; applied to every position independently."""
    if hidden.shape[-1] != ps["head.fc1.w"].shape[0]:
        raise ValueError("hidden width does not match the head")
    h = relu(apply_linear(hidden, ps, "head.fc1"))
    h = relu(apply_linear(h, ps, "head.fc2"))
    return apply_linear(h, ps, "head.fc3")


def greedy_decode(
    f_vl: Tensor,
    pooled_text: Tensor | None,
    ps: ParamStore,
    cfg: TrackerConfig,
    memory_valid: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Emit 4 coordinate tokens per batch row, then check whether EOS follows.

    Returns ``(tokens (B, 4), eos_flags (B,))``.  EOS is excluded from the
    argmax on the four coordinate steps; ties go to the smallest id.
    """
    B = f_vl.shape[0]
    K = cfg.bins
    tokens = np.zeros((B, 0), dtype=np.int64)
    with no_grad():
        for _ in range(SEQ_LEN - 1):
            q = build_conditional_queries(pooled_text, tokens, ps, cfg, batch=B)
            logits = head_logits(decoder_forward(f_vl, q, ps, cfg, memory_valid), ps).data
            nxt = np.argmax(logits[:, -1, :K], axis=-1)
            tokens = np.concatenate([tokens, nxt[:, None]], axis=1)
        q = build_conditional_queries(pooled_text, tokens, ps, cfg, batch=B)
        last = head_logits(decoder_forward(f_vl, q, ps, cfg, memory_valid), ps).data[:, -1]
    return tokens, np.argmax(last, axis=-1) == K
