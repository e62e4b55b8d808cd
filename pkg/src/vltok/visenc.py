"""Patch embedding of the template/search pair and a joint transformer over both."""

from __future__ import annotations

import numpy as np

from .config import TrackerConfig
from .layers import encoder, init_encoder, init_linear
from .numerics import ParamStore, Tensor, concat, linear, truncated_normal


def extract_patches(img: np.ndarray, patch: int) -> np.ndarray:
    """(B, H, W, 3) or (H, W, 3) -> (B, (H/P)(W/P), P*P*3), raster order."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[None]
    B, H, W, ch = img.shape
    if H % patch or W % patch:
        raise ValueError(f"image {H}x{W} is not divisible by patch size {patch}")
    gh, gw = H // patch, W // patch
    x = img.reshape(B, gh, patch, gw, patch, ch).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(B, gh * gw, patch * patch * ch)


def init_visual_encoder(ps: ParamStore, rng: np.random.Generator, cfg: TrackerConfig) -> None:
    C, P = cfg.channels, cfg.patch_size
    init_linear(ps, rng, "vis.patch", P * P * 3, C)
    ps.add("vis.pos_template", truncated_normal(rng, (cfg.num_template_tokens, C)))
    ps.add("vis.pos_search", truncated_normal(rng, (cfg.num_search_tokens, C)))
    init_encoder(ps, rng, "vis.enc", cfg.vis_depth, C, cfg.ff_mult * C)


def patchify(img: np.ndarray, patch: int, ps: ParamStore, which: str) -> Tensor:
    """Linear projection of every P x P x 3 patch plus the learnable position table ``which``."""
    tokens = linear(extract_patches(img, patch), ps["vis.patch.w"], ps["vis.patch.b"])
    pos = ps[f"vis.pos_{which}"]
    if tokens.shape[1] != pos.shape[0]:
        raise ValueError(f"{tokens.shape[1]} patches but {pos.shape[0]} {which} positions")
    return tokens + pos


def encode_visual(z: np.ndarray, x: np.ndarray, ps: ParamStore, cfg: TrackerConfig) -> Tensor:
    """Template then search tokens, jointly attended: (B, N_v, C)."""
    P = cfg.patch_size
    tokens = concat([patchify(z, P, ps, "template"), patchify(x, P, ps, "search")], axis=1)
    return encoder(tokens, ps, "vis.enc", cfg.vis_depth, cfg.vis_heads)
