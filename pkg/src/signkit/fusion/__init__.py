"""Multi-stream fusion translation model: per-modality transformer
encoders, a decoder with modality-specific cross-attention whose contexts
are concatenated, training with a linear warmup/decay schedule, and beam
search decoding."""

from .model import (
    CANONICAL_STREAMS,
    ConfigurationError,
    FusionConfig,
    FusionModel,
    expected_param_count,
)
from .decoding import Hypothesis, beam_search, greedy_decode
from .gradcheck import grad_check
from .training import learning_rate, load_checkpoint, save_checkpoint, train

__all__ = [
    "CANONICAL_STREAMS",
    "ConfigurationError",
    "FusionConfig",
    "FusionModel",
    "Hypothesis",
    "beam_search",
    "expected_param_count",
    "grad_check",
    "greedy_decode",
    "learning_rate",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
