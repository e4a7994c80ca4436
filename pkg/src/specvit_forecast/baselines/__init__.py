from .arima import (
    ArimaFit,
    ArimaOrder,
    ArimaSearchResult,
    arima_auto,
    arima_fit,
    select_differencing,
)
from .simple import ALPHA_GRID, EmaConfig, ema_forecast, naive_forecast, tune_ema_alpha

BASELINES = ("naive", "ema", "arima")

__all__ = [
    "ALPHA_GRID",
    "BASELINES",
    "ArimaFit",
    "ArimaOrder",
    "ArimaSearchResult",
    "EmaConfig",
    "arima_auto",
    "arima_fit",
    "ema_forecast",
    "naive_forecast",
    "select_differencing",
    "tune_ema_alpha",
]
