"""Vision-language tracking as auto-regressive coordinate-token generation."""

from .config import PRESETS, RunConfig, TrackerConfig, TrainSettings
from .numerics import OptimHyper, ParamStore, Tensor
from .pipeline import Tracker, init_model, train, train_step
from .seqtok import Box, TokenVocab

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "Box",
    "OptimHyper",
    "ParamStore",
    "RunConfig",
    "Tensor",
    "TokenVocab",
    "Tracker",
    "TrackerConfig",
    "TrainSettings",
    "init_model",
    "train",
    "train_step",
]
