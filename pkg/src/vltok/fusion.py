"""Channel reduction and gated fusion of the visual and text streams.

The fused representation is ``sigmoid(E(cat)) * cat`` where ``cat`` is the
row-wise concatenation of the reduced visual and text features and ``E`` is
a shared transformer encoder over that joint sequence.
"""

from __future__ import annotations

import numpy as np

from .config import TrackerConfig
from .layers import encoder, init_encoder, init_linear, key_padding_mask
from .numerics import ParamStore, Tensor, concat, linear, sigmoid


def init_fusion(ps: ParamStore, rng: np.random.Generator, cfg: TrackerConfig) -> None:
    C, d = cfg.channels, cfg.model_dim
    init_linear(ps, rng, "fuse.reduce_vis", C, d)
    init_linear(ps, rng, "fuse.reduce_text", C, d)
    init_encoder(ps, rng, "fuse.enc", cfg.fusion_depth, d, cfg.ff_mult * d)


def reduce_channels(f: Tensor, ps: ParamStore, stream: str) -> Tensor:
    """Per-row affine map C -> d; ``stream`` is ``"vis"`` or ``"text"``."""
    w = ps[f"fuse.reduce_{stream}.w"]
    if f.shape[-1] != w.shape[0]:
        raise ValueError(f"expected width {w.shape[0]}, got {f.shape[-1]}")
    return linear(f, w, ps[f"fuse.reduce_{stream}.b"])


def fusion_gate(joint: Tensor, ps: ParamStore, cfg: TrackerConfig, valid: np.ndarray | None = None) -> Tensor:
    mask = None if valid is None else key_padding_mask(valid)
    return sigmoid(encoder(joint, ps, "fuse.enc", cfg.fusion_depth, cfg.fusion_heads, mask))


def fuse_vl(
    f_v: Tensor,
    f_l: Tensor,
    ps: ParamStore,
    cfg: TrackerConfig,
    text_valid: np.ndarray | None = None,
    force_gate_one: bool = False,
) -> Tensor:
    """(B, N_v, d) and (B, N_l, d) -> (B, N_v + N_l, d).

    ``text_valid`` flags real (non-padding) text rows.  ``force_gate_one``
    replaces the gate by ones, leaving the plain concatenation.
    """
    if f_v.shape[-1] != f_l.shape[-1] or f_v.shape[-1] != cfg.model_dim:
        raise ValueError("both streams must already be reduced to the model width")
    joint = concat([f_v, f_l], axis=1)
    if force_gate_one:
        return joint
    valid = None
    if text_valid is not None:
        vis_valid = np.ones((f_v.shape[0], f_v.shape[1]), dtype=bool)
        valid = np.concatenate([vis_valid, np.asarray(text_valid, dtype=bool)], axis=1)
    return fusion_gate(joint, ps, cfg, valid) * joint
