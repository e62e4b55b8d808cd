"""Run configuration: model geometry, optimiser and training schedule.

A run configuration is stored as a flat UTF-8 ``key = value`` file, one
pair per line, ``#`` starting a comment.  Keys are the field names of
:class:`TrackerConfig`, :class:`~vltok.numerics.OptimHyper` and
:class:`TrainSettings`; they are unique across the three.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .numerics import OptimHyper

BOX_FORMATS = ("corner", "center")
QUERY_MODES = ("multi", "single")


@dataclass(frozen=True)
class TrackerConfig:
    """Everything that determines parameter shapes and crop geometry."""

    template_size: int = 32
    search_size: int = 64  # also the quantisation range s
    patch_size: int = 8
    template_factor: float = 2.0
    search_factor: float = 4.0
    channels: int = 64  # encoder width C
    model_dim: int = 64  # fused / decoder width d
    vis_depth: int = 4
    vis_heads: int = 4
    text_depth: int = 2
    text_heads: int = 4
    max_text_len: int = 32
    fusion_depth: int = 2
    fusion_heads: int = 4
    dec_depth: int = 2
    dec_heads: int = 8
    ff_mult: int = 4
    bins: int = 100
    box_format: str = "corner"
    query_mode: str = "multi"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for size in (self.template_size, self.search_size):
            if size <= 0 or size % self.patch_size:
                raise ValueError(f"image size {size} is not a positive multiple of patch size {self.patch_size}")
        for width, heads, what in (
            (self.channels, self.vis_heads, "vis"),
            (self.channels, self.text_heads, "text"),
            (self.model_dim, self.fusion_heads, "fusion"),
            (self.model_dim, self.dec_heads, "dec"),
        ):
            if heads < 1 or width % heads:
                raise ValueError(f"{what}: width {width} not divisible by {heads} heads")
        if self.bins < 2:
            raise ValueError("bins must be at least 2")
        if self.template_factor < 1 or self.search_factor < 1:
            raise ValueError("context factors must be >= 1")
        if self.box_format not in BOX_FORMATS:
            raise ValueError(f"box_format must be one of {BOX_FORMATS}")
        if self.query_mode not in QUERY_MODES:
            raise ValueError(f"query_mode must be one of {QUERY_MODES}")
        if min(self.vis_depth, self.text_depth, self.fusion_depth, self.dec_depth, self.ff_mult, self.max_text_len) < 1:
            raise ValueError("depths, ff_mult and max_text_len must be positive")

    @property
    def num_template_tokens(self) -> int:
        return (self.template_size // self.patch_size) ** 2

    @property
    def num_search_tokens(self) -> int:
        return (self.search_size // self.patch_size) ** 2

    @property
    def num_visual_tokens(self) -> int:
        return self.num_template_tokens + self.num_search_tokens


@dataclass(frozen=True)
class TrainSettings:
    steps: int = 20000
    batch_size: int = 16
    warmup_steps: int = 200
    lr_drop_at: float = 5 / 6  # fraction of total steps
    lr_drop_factor: float = 0.1
    max_frame_gap: int = 10
    center_jitter: float = 0.5  # fraction of box size
    scale_jitter: float = 0.15
    train_data: str = ""
    eval_data: str = ""
    out: str = ""


@dataclass(frozen=True)
class RunConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    optim: OptimHyper = field(default_factory=OptimHyper)
    train: TrainSettings = field(default_factory=TrainSettings)

    def to_flat(self) -> dict:
        out = {}
        for part in (self.tracker, self.optim, self.train):
            out.update(dataclasses.asdict(part))
        return out

    @classmethod
    def from_flat(cls, values: dict, base: RunConfig | None = None) -> RunConfig:
        base = base or cls()
        owners = _field_owners()
        unknown = sorted(set(values) - set(owners))
        if unknown:
            raise KeyError(f"unknown configuration keys: {', '.join(unknown)}")
        parts = {"tracker": {}, "optim": {}, "train": {}}
        for key, raw in values.items():
            part, ftype = owners[key]
            parts[part][key] = _coerce(raw, ftype, key)
        return RunConfig(
            tracker=replace(base.tracker, **parts["tracker"]),
            optim=replace(base.optim, **parts["optim"]),
            train=replace(base.train, **parts["train"]),
        )

    def with_overrides(self, **values) -> RunConfig:
        return RunConfig.from_flat(values, base=self)


def _field_owners() -> dict:
    owners = {}
    for part, cls in (("tracker", TrackerConfig), ("optim", OptimHyper), ("train", TrainSettings)):
        for f in fields(cls):
            assert f.name not in owners, f.name
            owners[f.name] = (part, f.type)
    return owners


def _coerce(raw, ftype, key):
    ftype = ftype if isinstance(ftype, str) else ftype.__name__
    if not isinstance(raw, str):
        if ftype == "int" and isinstance(raw, float):
            raise ValueError(f"{key}: expected an integer, got {raw!r}")
        return {"int": int, "float": float, "str": str}[ftype](raw)
    text = raw.strip()
    try:
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
    except ValueError:
        raise ValueError(f"{key}: cannot parse {text!r} as {ftype}") from None
    return text


PRESETS = {
    "toy": RunConfig(),
    "full": RunConfig(
        tracker=TrackerConfig(
            template_size=192,
            search_size=384,
            patch_size=16,
            channels=768,
            model_dim=256,
            vis_depth=12,
            vis_heads=12,
            text_depth=2,
            text_heads=12,
            fusion_depth=2,
            fusion_heads=8,
            dec_depth=6,
            dec_heads=8,
            bins=1000,
        ),
        train=TrainSettings(batch_size=32),
    ),
}


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        values[key] = value
    return values


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return RunConfig.from_flat(parse_config_text(Path(path).read_text(encoding="utf-8")), base)


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_flat().items())


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")
