from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .layers import EncoderBlock, LayerNorm, Linear, Mlp, Module, MultiHeadSelfAttention
from .optim import (
    AdamWState,
    EarlyStopper,
    StopDecision,
    TrainSchedule,
    adamw_step,
    evaluate_early_stop,
    lr_at,
)
from .tensor import Tensor, gelu, layer_norm, matmul, mse_loss, no_grad, softmax

__all__ = [
    "AdamWState",
    "Checkpoint",
    "EarlyStopper",
    "EncoderBlock",
    "LayerNorm",
    "Linear",
    "Mlp",
    "Module",
    "MultiHeadSelfAttention",
    "StopDecision",
    "TrainSchedule",
    "Tensor",
    "adamw_step",
    "evaluate_early_stop",
    "gelu",
    "layer_norm",
    "load_checkpoint",
    "lr_at",
    "matmul",
    "mse_loss",
    "no_grad",
    "softmax",
    "save_checkpoint",
]
