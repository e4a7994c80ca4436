"""Static matplotlib figures: data panels and forecast overlays."""

import logging
import os
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..core import ForecastTask  # noqa: E402
from .report import DISPLAY_NAMES  # noqa: E402

logger = logging.getLogger(__name__)


def plot_panels(path: str | os.PathLike, scaled_context: np.ndarray, spectrogram_pixels: np.ndarray, title: str = "") -> None:
    """Line plot of the scaled context above its spectrogram raster."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), gridspec_kw={"height_ratios": [1, 2]})
    top.plot(np.arange(scaled_context.size), scaled_context, "k-", linewidth=1.2)
    top.set_xlim(0, max(scaled_context.size - 1, 1))
    top.set_ylim(-0.05, 1.05)
    top.set_ylabel("scaled value")
    top.set_title(title)
    bottom.imshow(spectrogram_pixels, cmap="gray", vmin=0, vmax=255, aspect="auto")
    bottom.set_xlabel("time (resampled)")
    bottom.set_ylabel("scale (small at top)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.debug("Saved panel figure to %s", path)


def plot_forecasts(
    path: str | os.PathLike,
    task: ForecastTask,
    forecasts: Mapping[str, np.ndarray],
    title: str = "",
) -> None:
    """Context, ground truth and each method's forecast on a shared time axis."""
    context_t = np.arange(task.input_len)
    horizon_t = np.arange(task.input_len, task.input_len + task.horizon)
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.plot(context_t, task.context, "b-", label="Context", linewidth=1.5)
    ax.plot(horizon_t, task.target, "g-", label="Ground truth", linewidth=2)
    for method, values in forecasts.items():
        ax.plot(horizon_t, values, "--", label=DISPLAY_NAMES.get(method, method), linewidth=1.5)
    ax.axvline(task.input_len - 0.5, color="gray", linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("value")
    ax.set_title(title or task.key)
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.debug("Saved forecast overlay to %s", path)
