"""Naive and exponential-moving-average forecasts."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from ..core import ForecastTask
from ..exceptions import ConfigError, DataError
from ..metrics import MetricInput, smape

logger = logging.getLogger(__name__)

ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


def _context(values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataError("Forecasting needs a non-empty context.")
    return x


def naive_forecast(context, horizon: int) -> np.ndarray:
    """The last observed value repeated `horizon` times."""
    return np.full(max(horizon, 0), _context(context)[-1])


@dataclass(frozen=True)
class EmaConfig:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"EMA alpha must lie in (0, 1], got {self.alpha}.")


def ema_level(context, alpha: float) -> float:
    """Final value of e_1 = x_1, e_t = alpha x_t + (1 - alpha) e_{t-1}."""
    x = _context(context)
    if alpha == 1:
        return float(x[-1])
    # y_t = alpha x_t + (1 - alpha) y_{t-1}, seeded so that y_1 = x_1.
    levels, _ = signal.lfilter([alpha], [1.0, alpha - 1.0], x[1:], zi=[(1.0 - alpha) * x[0]])
    return float(levels[-1]) if levels.size else float(x[0])


def ema_forecast(context, horizon: int, cfg: EmaConfig | None = None) -> np.ndarray:
    """Holds the final EMA level flat over the horizon."""
    cfg = cfg or EmaConfig()
    return np.full(max(horizon, 0), ema_level(context, cfg.alpha))


def tune_ema_alpha(tasks: Sequence[ForecastTask], grid: Sequence[float] = ALPHA_GRID) -> EmaConfig:
    """Picks the alpha with the lowest mean validation SMAPE; ties keep the smaller alpha."""
    if not tasks:
        logger.warning("No validation tasks to tune EMA alpha; using the default.")
        return EmaConfig()
    best_alpha, best_score = None, np.inf
    for alpha in grid:
        cfg = EmaConfig(alpha)
        score = float(np.mean([
            smape(MetricInput(t.context, t.target, ema_forecast(t.context, t.horizon, cfg))) for t in tasks
        ]))
        logger.debug("EMA alpha %.2f: validation SMAPE %.6f", alpha, score)
        if score < best_score:
            best_alpha, best_score = alpha, score
    logger.info("Selected EMA alpha %.2f (validation SMAPE %.4f).", best_alpha, best_score)
    return EmaConfig(best_alpha)
