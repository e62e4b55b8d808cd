"""Deterministic moving-shapes videos with templated captions.

Each sequence shows 1-4 coloured shapes drifting over a textured
background.  One of them is the target, and the caption names its colour
and shape, a pair no other object in the sequence shares.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..seqtok import Box

COLORS = {
    "red": (0.90, 0.12, 0.12),
    "green": (0.10, 0.75, 0.20),
    "blue": (0.15, 0.25, 0.95),
    "yellow": (0.95, 0.90, 0.10),
    "magenta": (0.90, 0.15, 0.85),
    "cyan": (0.10, 0.85, 0.90),
}
SHAPES = ("circle", "square", "triangle")
ATTRIBUTES = ("scale-variation", "fast-motion", "distractor", "occlusion")
CAPTION_TEMPLATES = (
    "the {color} {shape} moving among other shapes",
    "a {color} {shape}",
    "track the {color} {shape}",
    "the {shape} that is {color}",
)

_SUPERSAMPLE = 4


@dataclass
class SyntheticSequence:
    frames: np.ndarray  # (T, H, W, 3) uint8
    gt_boxes: list  # corner-format Box per frame
    caption: str
    attributes: frozenset
    seed: int
    target: tuple = ("", "")  # (color, shape)
    template_id: int = 0
    name: str = ""
    difficulty: str = "easy"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def parse_caption(caption: str) -> tuple:
    """Recover (color, shape) from any caption template."""
    words = caption.lower().split()
    color = [w for w in words if w in COLORS]
    shape = [w for w in words if w in SHAPES]
    if len(color) != 1 or len(shape) != 1:
        raise ValueError(f"caption {caption!r} does not name exactly one colour and shape")
    return color[0], shape[0]


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.25, 0.55, size=3)
    img = np.broadcast_to(base, (size, size, 3)).copy()
    for _ in range(3):
        fx, fy = rng.uniform(1, 4, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.02, 0.06, size=3)
        img += np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)[..., None] * amp
    img += rng.normal(0, 0.015, size=img.shape)
    return img


def _coverage(shape: str, x: float, y: float, w: float, h: float, size: int):
    """Sub-pixel coverage of a shape with bounding box (x, y, w, h), cropped to its pixel window."""
    x0, y0 = max(int(math.floor(x)), 0), max(int(math.floor(y)), 0)
    x1, y1 = min(int(math.ceil(x + w)), size), min(int(math.ceil(y + h)), size)
    if x1 <= x0 or y1 <= y0:
        return None
    n = _SUPERSAMPLE
    sx = x0 + (np.arange((x1 - x0) * n) + 0.5) / n
    sy = y0 + (np.arange((y1 - y0) * n) + 0.5) / n
    u = (sx[None, :] - x) / w  # 0..1 across the box
    v = (sy[:, None] - y) / h
    if shape == "square":
        inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
    elif shape == "circle":
        inside = (u - 0.5) ** 2 + (v - 0.5) ** 2 <= 0.25
    else:  # apex at top centre, base along the bottom edge
        inside = (v >= 0) & (v <= 1) & (np.abs(u - 0.5) <= 0.5 * v)
    cov = inside.reshape(y1 - y0, n, x1 - x0, n).mean(axis=(1, 3))
    return (slice(y0, y1), slice(x0, x1)), cov


def _overlap_fraction(a: tuple, b: tuple) -> float:
    """Fraction of box a (x, y, w, h) covered by box b."""
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    return ix * iy / (a[2] * a[3])


def _trajectory(rng, T: int, frame_size: int, size0: float, fast: bool, scale_var: bool):
    """Centre track (T, 2) and per-frame object size (T,) from a damped random walk."""
    sizes = np.full(T, size0)
    if scale_var:
        target = size0 * rng.uniform(1.5, 2.0) ** rng.choice([-1, 1])
        target = float(np.clip(target, 8, 32))
        sizes = size0 + (target - size0) * (0.5 - 0.5 * np.cos(np.linspace(0, np.pi, T)))
    accel = 1.8 if fast else 0.6
    vmax = 7.0 if fast else 2.5
    pos = np.empty((T, 2))
    margin = 0.6 * sizes[0] + 1
    pos[0] = rng.uniform(margin, frame_size - margin, size=2)
    vel = rng.normal(0, 1.0, size=2)
    for t in range(1, T):
        vel = 0.85 * vel + rng.normal(0, accel, size=2)
        speed = np.linalg.norm(vel)
        if speed > vmax:
            vel *= vmax / speed
        p = pos[t - 1] + vel
        half = 0.6 * sizes[t] + 1  # box half-extent is at most 0.58 * size
        for k in range(2):
            if p[k] < half or p[k] > frame_size - half:
                vel[k] = -vel[k]
                p[k] = np.clip(p[k], half, frame_size - half)
        pos[t] = p
    return pos, sizes


def generate_sequence(seed: int, index: int, difficulty: str = "easy", frame_size: int = 128, length: int = 30):
    if difficulty not in ("easy", "hard"):
        raise ValueError("difficulty must be 'easy' or 'hard'")
    rng = np.random.default_rng([seed, index])
    hard = difficulty == "hard"
    color_names = list(COLORS)
    n_obj = int(rng.integers(1, 5))
    t_color = color_names[int(rng.integers(6))]
    t_shape = SHAPES[int(rng.integers(3))]
    objects = [(t_color, t_shape)]
    while len(objects) < n_obj:
        c = color_names[int(rng.integers(6))]
        s = SHAPES[int(rng.integers(3))]
        if (c, s) in objects:
            continue
        if not hard and c == t_color:
            continue
        objects.append((c, s))

    fast = hard and rng.random() < 0.5
    scale_var = hard and rng.random() < 0.5
    tracks = []
    for k, _ in enumerate(objects):
        size0 = float(rng.uniform(8, 32))
        aspect = float(rng.uniform(0.75, 1.33))
        pos, sizes = _trajectory(rng, length, frame_size, size0, fast and k == 0, scale_var and k == 0)
        tracks.append((pos, sizes, aspect))

    # target drawn last in easy mode; random depth order in hard mode
    order = list(range(1, n_obj)) + [0]
    if hard:
        rng.shuffle(order)
    bg = _background(rng, frame_size)
    frames = np.empty((length, frame_size, frame_size, 3), dtype=np.uint8)
    boxes = []
    occluded = False
    for t in range(length):
        img = bg.copy()
        rects = []
        for k in range(n_obj):
            pos, sizes, aspect = tracks[k]
            w = sizes[t] * math.sqrt(aspect)
            h = sizes[t] / math.sqrt(aspect)
            rects.append((pos[t, 0] - w / 2, pos[t, 1] - h / 2, w, h))
        for k in order:
            hit = _coverage(objects[k][1], *rects[k], frame_size)
            if hit is None:
                continue
            win, cov = hit
            col = np.array(COLORS[objects[k][0]])
            img[win] = img[win] * (1 - cov[..., None]) + col * cov[..., None]
        above = order[order.index(0) + 1 :]
        if any(_overlap_fraction(rects[0], rects[k]) > 0.1 for k in above):
            occluded = True
        frames[t] = np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)
        x, y, w, h = rects[0]
        boxes.append(Box.from_xywh(x, y, w, h))

    attrs = set()
    sizes0 = tracks[0][1]
    if sizes0.max() / sizes0.min() > 1.3:
        attrs.add("scale-variation")
    if fast:
        attrs.add("fast-motion")
    if any(c == t_color for c, _ in objects[1:]):
        attrs.add("distractor")
    if occluded:
        attrs.add("occlusion")
    template_id = int(rng.integers(len(CAPTION_TEMPLATES)))
    caption = CAPTION_TEMPLATES[template_id].format(color=t_color, shape=t_shape)
    return SyntheticSequence(
        frames=frames,
        gt_boxes=boxes,
        caption=caption,
        attributes=frozenset(attrs),
        seed=seed,
        target=(t_color, t_shape),
        template_id=template_id,
        name=f"seq_{index:04d}",
        difficulty=difficulty,
        meta={"objects": [list(o) for o in objects], "index": index},
    )


def generate_dataset(n: int, seed: int, difficulty: str = "easy", frame_size: int = 128, length: int = 30) -> list:
    """``n`` sequences; sequence i depends only on (seed, i, difficulty, frame_size, length)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_sequence(seed, i, difficulty, frame_size, length) for i in range(n)]


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------


def write_ppm(path: Path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_ppm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields_, pos = [], 0
    while len(fields_) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields_.append(raw[pos:end])
        pos = end
    if fields_[0] != b"P6" or int(fields_[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(fields_[1]), int(fields_[2])
    data = np.frombuffer(raw[pos + 1 : pos + 1 + w * h * 3], dtype=np.uint8)
    if data.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3)


def format_boxes(boxes) -> str:
    return "".join("%.6f,%.6f,%.6f,%.6f\n" % b.to_xywh() for b in boxes)


def read_boxes(path: Path) -> list:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            x, y, w, h = (float(v) for v in line.replace("\t", ",").split(","))
            out.append(Box.from_xywh(x, y, w, h))
    return out


def save_sequence(seq: SyntheticSequence, directory: Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(seq.frames):
        write_ppm(d / f"frame_{t:06d}.ppm", frame)
    (d / "groundtruth.txt").write_text(format_boxes(seq.gt_boxes))
    (d / "language.txt").write_text(seq.caption + "\n")
    meta = {
        "seed": seq.seed,
        "attributes": sorted(seq.attributes),
        "frame_size": [int(seq.frames.shape[2]), int(seq.frames.shape[1])],
        "length": len(seq),
        "difficulty": seq.difficulty,
        "target": list(seq.target),
        "template_id": seq.template_id,
        **seq.meta,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def save_dataset(sequences, directory: Path) -> None:
    for seq in sequences:
        save_sequence(seq, Path(directory) / seq.name)


def load_sequence(directory: Path) -> SyntheticSequence:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    frames = np.stack([read_ppm(p) for p in sorted(d.glob("frame_*.ppm"))])
    boxes = read_boxes(d / "groundtruth.txt")
    if len(boxes) != len(frames):
        raise ValueError(f"{d}: {len(frames)} frames but {len(boxes)} boxes")
    extra = {k: v for k, v in meta.items() if k in ("objects", "index")}
    return SyntheticSequence(
        frames=frames,
        gt_boxes=boxes,
        caption=(d / "language.txt").read_text().strip(),
        attributes=frozenset(meta["attributes"]),
        seed=meta["seed"],
        target=tuple(meta.get("target", ("", ""))),
        template_id=meta.get("template_id", 0),
        name=d.name,
        difficulty=meta.get("difficulty", "easy"),
        meta=extra,
    )


def load_dataset(directory: Path) -> list:
    dirs = sorted(p for p in Path(directory).iterdir() if (p / "meta.json").exists())
    if not dirs:
        raise FileNotFoundError(f"no sequences under {directory}")
    return [load_sequence(p) for p in dirs]
