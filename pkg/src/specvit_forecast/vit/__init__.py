from .model import VitConfig, VitForecaster, patchify
from .training import (
    VARIANTS,
    EpochRecord,
    TrainingLog,
    predict,
    predict_batch,
    render_batch,
    render_context,
    train,
)

__all__ = [
    "VARIANTS",
    "EpochRecord",
    "TrainingLog",
    "VitConfig",
    "VitForecaster",
    "patchify",
    "predict",
    "predict_batch",
    "render_batch",
    "render_context",
    "train",
]
