"""AdamW, learning-rate schedule and early stopping."""

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..exceptions import ConfigError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    """Hyperparameters plus per-parameter moment estimates keyed by name."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def scalars(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "step_count": self.step_count,
        }


def adamw_step(
    params: Mapping[str, Tensor],
    state: AdamWState,
    grads: Mapping[str, np.ndarray] | None = None,
) -> AdamWState:
    """Applies one AdamW update in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta),
    with bias-corrected moments and the decay decoupled from the gradient.

    Args:
        params: Named parameters; their `.data` arrays are replaced.
        state: Optimizer state, advanced by one step.
        grads: Optional gradients by name; defaults to each parameter's `.grad`.
            Parameters without a gradient are left untouched.

    Returns:
        The same `state`, for chaining.
    """
    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        grad = grads.get(name) if grads is not None else p.grad
        if grad is None:
            continue
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps) + state.weight_decay * p.data
        p.data = (p.data - state.lr * update).astype(p.dtype, copy=False)
    return state


@dataclass(frozen=True)
class TrainSchedule:
    base_lr: float = 1e-3
    warmup_epochs: int = 5
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 128
    min_lr_ratio: float = 0.01
    early_stopping: bool = True

    def __post_init__(self):
        if not 0 <= self.warmup_epochs < self.max_epochs:
            raise ConfigError(
                f"Require 0 <= warmup_epochs < max_epochs, got {self.warmup_epochs}, {self.max_epochs}."
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}.")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}.")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}.")


def lr_at(epoch: int, schedule: TrainSchedule) -> float:
    """Linear warmup from 0, then cosine decay to base_lr * min_lr_ratio at max_epochs."""
    base = schedule.base_lr
    if epoch < schedule.warmup_epochs:
        return base * max(epoch, 0) / schedule.warmup_epochs
    if epoch == schedule.warmup_epochs:
        return base
    progress = min(1.0, (epoch - schedule.warmup_epochs) / (schedule.max_epochs - schedule.warmup_epochs))
    floor = base * schedule.min_lr_ratio
    return floor + (base - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


class EarlyStopper:
    """Tracks validation losses; only a strict improvement resets patience."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}.")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = -1
        self.bad_epochs = 0
        self.epochs_seen = 0
        self.improved = False

    def update(self, val_loss: float) -> bool:
        """Records the next epoch's loss and returns whether to stop."""
        epoch = self.epochs_seen
        self.epochs_seen += 1
        self.improved = val_loss < self.best_loss
        if self.improved:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.should_stop

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    best_epoch: int
    stop_epoch: int | None = None


def evaluate_early_stop(val_losses: Sequence[float], patience: int) -> StopDecision:
    """Replays a loss history and reports the first epoch at which training stops."""
    stopper = EarlyStopper(patience)
    for epoch, loss in enumerate(val_losses):
        if stopper.update(float(loss)):
            return StopDecision(True, stopper.best_epoch, epoch)
    return StopDecision(False, stopper.best_epoch)
