"""Audio-visual video parsing: hybrid attention aggregation, attentive MMIL pooling,
label-smoothed weak supervision and the segment/event F-score suite."""

from .han import VARIANTS, HanVariant
from .objectives import SmoothingConfig, SmoothingMode
from .train import TrainConfig, fit

__all__ = ["VARIANTS", "HanVariant", "SmoothingConfig", "SmoothingMode", "TrainConfig", "fit"]
__version__ = "0.1.0"
