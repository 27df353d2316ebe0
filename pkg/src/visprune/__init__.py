"""Visual-computation pruning for mixed-modality transformers."""

from .config import ModelConfig, PruneConfig
from .layout import DistanceMetric, TokenLayout

__all__ = ["ModelConfig", "PruneConfig", "DistanceMetric", "TokenLayout"]
