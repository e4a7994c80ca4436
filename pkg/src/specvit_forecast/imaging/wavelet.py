"""Morlet continuous wavelet transform.

The spectrogram is the magnitude of the CWT: rows are wavelet scales in
ascending order (highest frequency on top) and columns are time steps.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

# |psi(x)| / |psi(0)| = exp(-12.5) < 1e-5 beyond this many scales from the center
_SUPPORT_IN_SCALES = 5.0


@dataclass(frozen=True)
class MorletConfig:
    """Scale grid of the transform.

    When `scale_min`/`scale_max` are unset they are derived per series length
    so that the covered periods span [2, L] samples through s = w P / (2 pi).
    """
    w: float = 5.0
    n_scales: int = 112
    scale_min: float | None = None
    scale_max: float | None = None

    def __post_init__(self):
        if self.w <= 0:
            raise ConfigError(f"Morlet center frequency must be > 0, got {self.w}.")
        if self.n_scales < 2:
            raise ConfigError(f"n_scales must be >= 2, got {self.n_scales}.")
        if self.scale_min is not None and self.scale_max is not None:
            if not 0 < self.scale_min < self.scale_max:
                raise ConfigError(
                    f"Require 0 < scale_min < scale_max, got {self.scale_min}, {self.scale_max}."
                )

    def scale_for_period(self, period: float) -> float:
        return self.w * period / (2 * math.pi)

    def scales(self, length: int) -> np.ndarray:
        """Geometrically spaced scales, smallest first."""
        lo = self.scale_min if self.scale_min is not None else self.scale_for_period(2)
        hi = self.scale_max if self.scale_max is not None else self.scale_for_period(max(length, 3))
        if not 0 < lo < hi:
            raise ConfigError(f"Resolved scale range [{lo}, {hi}] is empty for length {length}.")
        return np.geomspace(lo, hi, self.n_scales)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """CWT magnitudes, shape (n_scales, L)."""
    magnitudes: np.ndarray
    scales: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitudes.shape

    @property
    def length(self) -> int:
        return self.magnitudes.shape[1]


def morlet(x, s: float, w: float = 5.0):
    """Scaled Morlet wavelet s^-1/2 pi^-1/4 exp(-(x/s)^2 / 2) exp(i w x / s).

    Accepts scalars or arrays for `x`.
    """
    if s <= 0:
        raise ConfigError(f"Wavelet scale must be > 0, got {s}.")
    u = np.asarray(x, dtype=np.float64) / s
    value = s ** -0.5 * np.pi ** -0.25 * np.exp(-0.5 * u * u) * np.exp(1j * w * u)
    return complex(value) if value.ndim == 0 else value


def cwt(values, cfg: MorletConfig | None = None) -> Spectrogram:
    """Magnitude of the Morlet CWT of `values` at every configured scale.

    Each row convolves the zero-padded series with the conjugated, reflected
    wavelet at one scale, so coefficient b is sum_t x_t conj(psi(t - b)).
    """
    cfg = cfg or MorletConfig()
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise DataError(f"cwt requires a 1-D series of length >= 2, got shape {x.shape}.")
    length = x.size
    scales = cfg.scales(length)
    magnitudes = np.empty((scales.size, length), dtype=np.float64)
    for row, s in enumerate(scales):
        # Kernel taps further than L-1 from the center never overlap the series.
        half = int(min(math.ceil(_SUPPORT_IN_SCALES * s), length - 1))
        u = np.arange(-half, half + 1, dtype=np.float64)
        kernel = np.conj(morlet(-u, s, cfg.w))
        magnitudes[row] = np.abs(signal.fftconvolve(x, kernel, mode="same"))
    logger.debug("CWT over %d scales [%.3f, %.3f] for length %d.", scales.size, scales[0], scales[-1], length)
    return Spectrogram(magnitudes, scales)
