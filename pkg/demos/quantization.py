"""
Boxes as tokens
===============

A box in the search crop is four numbers in [0, s].  Each number becomes
one of K bins, and the id K is kept free for the end-of-sequence token.
"""

import numpy as np

from vltok.bench.metrics import iou
from vltok.seqtok import (
    Box,
    TokenVocab,
    box_to_tokens,
    dequantize_coord,
    quantize_coord,
    tokens_to_box,
)

s, K = 384, 1000
print("100 px ->", quantize_coord(100, s, K), "->", dequantize_coord(quantize_coord(100, s, K), s, K))

# the top edge would land on bin K, which belongs to EOS, so it is clamped
print("s px   ->", quantize_coord(s, s, K))

box = Box(100, 50, 200, 150)
vocab = TokenVocab(K)
tokens = box_to_tokens(box, s, vocab)
print("corner tokens", tokens, "center tokens", box_to_tokens(box, s, vocab, "center"))
print("decoded", tokens_to_box(tokens, s, vocab).values)

# fewer bins lose more geometry
rng = np.random.default_rng(0)
boxes = []
for _ in range(500):
    x1, x2 = np.sort(rng.uniform(0, s, 2))
    y1, y2 = np.sort(rng.uniform(0, s, 2))
    boxes.append(Box(x1, y1, x2, y2))
for k in (10, 50, 100, 1000):
    v = TokenVocab(k)
    mean_iou = np.mean([iou(tokens_to_box(box_to_tokens(b, s, v), s, v), b) for b in boxes])
    print(f"K={k:5d}  mean IoU after the round trip {mean_iou:.4f}")
