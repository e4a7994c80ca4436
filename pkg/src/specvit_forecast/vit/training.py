"""Rendering per variant, the mini-batch training loop and prediction."""

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import ForecastTask, inverse_scale
from ..exceptions import ConfigError, EmptyDatasetError, NonFiniteLossError
from ..imaging import MorletConfig, render_lineplot, render_multimodal, render_strip
from ..nn.optim import AdamWState, EarlyStopper, TrainSchedule, adamw_step, lr_at
from ..nn.tensor import mse_loss, no_grad
from ..utils import derive_rng, format_data_payload
from .model import VitForecaster

logger = logging.getLogger(__name__)

VARIANTS = ("num-spec", "lineplot", "num")

# Stream id for mini-batch shuffling, distinct from model initialization (0)
_SHUFFLE_STREAM = 2


def render_context(scaled_context: np.ndarray, variant: str, morlet_cfg: MorletConfig | None = None) -> np.ndarray:
    """Renders one scaled context as the raster a variant consumes.

    num-spec gives the 128x128 strip+spectrogram image, lineplot the 128x128
    line chart and num the 16x128 strip alone.
    """
    if variant == "num-spec":
        return render_multimodal(scaled_context, morlet_cfg).pixels
    if variant == "lineplot":
        return render_lineplot(scaled_context)
    if variant == "num":
        return render_strip(scaled_context)
    raise ConfigError(f"Unknown ViT variant '{variant}'. Expected one of {VARIANTS}.")


def render_batch(
    tasks: Sequence[ForecastTask],
    variant: str,
    morlet_cfg: MorletConfig | None = None,
    executor: Executor | None = None,
) -> np.ndarray:
    """Renders every task's context; output order matches `tasks`."""
    if variant not in VARIANTS:
        raise ConfigError(f"Unknown ViT variant '{variant}'. Expected one of {VARIANTS}.")
    contexts = [t.scaled_context for t in tasks]
    if executor is None:
        images = [render_context(c, variant, morlet_cfg) for c in contexts]
    else:
        images = list(executor.map(render_context, contexts, [variant] * len(contexts), [morlet_cfg] * len(contexts)))
    if not images:
        return np.zeros((0, 0, 0), dtype=np.uint8)
    return np.stack(images)


def scaled_targets(tasks: Sequence[ForecastTask], dtype=np.float32) -> np.ndarray:
    return np.stack([t.scaled_target for t in tasks]).astype(dtype)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingLog:
    variant: str
    entries: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    optimizer: AdamWState | None = field(default=None, repr=False)

    @property
    def best_val_loss(self) -> float:
        return self.entries[self.best_epoch].val_loss if self.best_epoch >= 0 else math.nan

    @property
    def final(self) -> EpochRecord | None:
        return self.entries[-1] if self.entries else None

    def to_records(self) -> list[dict]:
        return [
            {"epoch": e.epoch, "train_loss": repr(e.train_loss), "val_loss": repr(e.val_loss), "lr": repr(e.lr)}
            for e in self.entries
        ]

    def to_csv(self) -> str:
        """`epoch,train_loss,val_loss,lr` rows."""
        return format_data_payload(self.to_records(), "csv")


def evaluate_loss(model: VitForecaster, images: np.ndarray, targets: np.ndarray, batch_size: int) -> float:
    """Sample-weighted mean MSE over all images, without recording a graph."""
    if len(images) == 0:
        return math.nan
    total = 0.0
    with no_grad():
        for start in range(0, len(images), batch_size):
            stop = start + batch_size
            loss = mse_loss(model(images[start:stop]), targets[start:stop])
            total += loss.item() * len(images[start:stop])
    return total / len(images)


def train(
    model: VitForecaster,
    train_tasks: Sequence[ForecastTask],
    val_tasks: Sequence[ForecastTask],
    schedule: TrainSchedule,
    variant: str,
    *,
    seed: int = 42,
    weight_decay: float = 0.05,
    morlet_cfg: MorletConfig | None = None,
    train_images: np.ndarray | None = None,
    val_images: np.ndarray | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainingLog:
    """Fits `model` in place with AdamW on mean squared error of scaled targets.

    Each epoch shuffles the training tasks with a generator derived from
    `seed`, steps through mini-batches, then scores the validation split.
    Weights from the epoch with the lowest validation loss are restored at the
    end. Without validation tasks the training loss drives early stopping.

    Args:
        model: The forecaster to train.
        train_tasks: Training tasks.
        val_tasks: Validation tasks used for early stopping and model selection.
        schedule: Epoch budget, warmup, patience and batch size.
        variant: One of VARIANTS; selects the rendering.
        seed: Experiment seed.
        weight_decay: Decoupled AdamW weight decay.
        morlet_cfg: Scale grid for num-spec rendering.
        train_images: Pre-rendered training rasters (skips rendering).
        val_images: Pre-rendered validation rasters.
        on_epoch: Called with each epoch's record.

    Returns:
        The per-epoch training log, with `best_epoch` set.

    Raises:
        EmptyDatasetError: If there are no training tasks.
        NonFiniteLossError: If a mini-batch loss is NaN or infinite.
    """
    if not train_tasks:
        raise EmptyDatasetError(f"No training tasks for variant '{variant}'.")
    x_train = train_images if train_images is not None else render_batch(train_tasks, variant, morlet_cfg)
    y_train = scaled_targets(train_tasks, model.dtype)
    has_val = bool(val_tasks)
    if has_val:
        x_val = val_images if val_images is not None else render_batch(val_tasks, variant, morlet_cfg)
        y_val = scaled_targets(val_tasks, model.dtype)
    else:
        logger.warning("No validation tasks for '%s'; early stopping follows the training loss.", variant)

    params = model.parameters()
    state = AdamWState(lr=schedule.base_lr, weight_decay=weight_decay)
    stopper = EarlyStopper(schedule.patience)
    rng = derive_rng(seed, _SHUFFLE_STREAM)
    log = TrainingLog(variant)
    best_state = model.state_dict()
    n = len(train_tasks)

    logger.info(
        "Training ViT-%s on %d tasks (%d val), %d parameters, up to %d epochs.",
        variant, n, len(val_tasks), model.num_parameters(), schedule.max_epochs,
    )
    for epoch in range(schedule.max_epochs):
        # epoch e trains at the rate reached at its end; the first warmup epoch is > 0
        state.lr = lr_at(epoch + 1, schedule)
        order = rng.permutation(n)
        total = 0.0
        for batch_index, start in enumerate(range(0, n, schedule.batch_size)):
            idx = order[start:start + schedule.batch_size]
            model.zero_grad()
            loss = mse_loss(model(x_train[idx]), y_train[idx])
            value = loss.item()
            if not math.isfinite(value):
                logger.error("Non-finite loss at epoch %d, batch %d.", epoch, batch_index)
                raise NonFiniteLossError(batch_index, epoch, value)
            loss.backward()
            adamw_step(params, state)
            total += value * len(idx)
        train_loss = total / n
        val_loss = evaluate_loss(model, x_val, y_val, schedule.batch_size) if has_val else train_loss

        record = EpochRecord(epoch, train_loss, val_loss, state.lr)
        log.entries.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.debug("epoch %d: train=%.6g val=%.6g lr=%.3g", epoch, train_loss, val_loss, state.lr)

        stop = stopper.update(val_loss)
        if stopper.improved:
            best_state = model.state_dict()
        if schedule.early_stopping and stop:
            log.stopped_early = True
            logger.info("Early stop for ViT-%s at epoch %d (best epoch %d).", variant, epoch, stopper.best_epoch)
            break

    model.load_state_dict(best_state)
    log.best_epoch = stopper.best_epoch
    log.optimizer = state
    logger.info("ViT-%s best validation loss %.6g at epoch %d.", variant, log.best_val_loss, log.best_epoch)
    return log


def predict(model: VitForecaster, task: ForecastTask, variant: str, morlet_cfg: MorletConfig | None = None) -> np.ndarray:
    """Forecast for one task in the task's original units."""
    image = render_context(task.scaled_context, variant, morlet_cfg)
    return inverse_scale(model.predict_scaled(image[None])[0], task.scaling)


def predict_batch(
    model: VitForecaster,
    tasks: Sequence[ForecastTask],
    variant: str,
    images: np.ndarray | None = None,
    batch_size: int = 128,
    morlet_cfg: MorletConfig | None = None,
) -> list[np.ndarray]:
    """Forecasts for many tasks, in task order and original units."""
    if not tasks:
        return []
    images = images if images is not None else render_batch(tasks, variant, morlet_cfg)
    forecasts = []
    for start in range(0, len(tasks), batch_size):
        scaled = model.predict_scaled(images[start:start + batch_size])
        forecasts.extend(
            inverse_scale(row, task.scaling) for row, task in zip(scaled, tasks[start:start + batch_size])
        )
    return forecasts
