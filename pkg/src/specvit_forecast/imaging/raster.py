"""Grayscale rasters fed to the forecaster.

Every raster is a uint8 numpy array with values in [0, 255].
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..exceptions import LengthMismatchError, OutOfRangeError
from .wavelet import MorletConfig, Spectrogram, cwt

logger = logging.getLogger(__name__)

IMAGE_SIZE = 128
STRIP_ROWS = 16
SPEC_ROWS = IMAGE_SIZE - STRIP_ROWS

# Lineplot margins: value 1 maps to the top row, value 0 to the bottom row
LINE_TOP_ROW = 4
LINE_BOTTOM_ROW = 123
LINE_THICKNESS = 2

_RANGE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class MultimodalImage:
    """128x128 raster: intensity strip rows over spectrogram rows."""
    pixels: np.ndarray
    strip_rows: int = STRIP_ROWS
    spec_rows: int = SPEC_ROWS

    @property
    def strip_region(self) -> np.ndarray:
        return self.pixels[: self.strip_rows]

    @property
    def spectrogram_region(self) -> np.ndarray:
        return self.pixels[self.strip_rows:]


def _round_to_pixels(values: np.ndarray) -> np.ndarray:
    # Half-up rounding; np.rint would round half to even.
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _checked_unit_interval(scaled_values) -> np.ndarray:
    v = np.asarray(scaled_values, dtype=np.float64)
    if v.size and (v.min() < -_RANGE_SLACK or v.max() > 1 + _RANGE_SLACK or not np.isfinite(v).all()):
        raise OutOfRangeError(
            f"Scaled values must lie in [0, 1]; got range [{v.min():.6g}, {v.max():.6g}]."
        )
    return np.clip(v, 0.0, 1.0)


def intensity_strip(scaled_values) -> np.ndarray:
    """Maps scaled values to pixel intensities round(255 v)."""
    return _round_to_pixels(255.0 * _checked_unit_interval(scaled_values))


def _resample_row(row: np.ndarray, width: int) -> np.ndarray:
    positions = np.linspace(0, row.size - 1, width)
    return np.interp(positions, np.arange(row.size), row.astype(np.float64))


def strip_raster(strip: np.ndarray, width: int = IMAGE_SIZE, rows: int = STRIP_ROWS) -> np.ndarray:
    """Resamples one intensity row to `width` and replicates it `rows` times."""
    row = _round_to_pixels(_resample_row(np.asarray(strip), width))
    return np.tile(row, (rows, 1))


def spectrogram_raster(spec: Spectrogram, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Bilinearly resamples magnitudes to (rows, cols) and normalizes to [0, 255].

    Normalization is per image and happens after resampling, so the brightest
    pixel is exactly 255 whenever any magnitude is non-zero.
    """
    mags = np.asarray(spec.magnitudes, dtype=np.float64)
    rows = rows or mags.shape[0]
    cols = cols or mags.shape[1]
    if (rows, cols) != mags.shape:
        grid = np.meshgrid(
            np.linspace(0, mags.shape[0] - 1, rows),
            np.linspace(0, mags.shape[1] - 1, cols),
            indexing="ij",
        )
        mags = ndimage.map_coordinates(mags, grid, order=1, mode="nearest")
    peak = mags.max()
    if peak <= 0:
        return np.zeros((rows, cols), dtype=np.uint8)
    return _round_to_pixels(mags * (255.0 / peak))


def compose_multimodal(strip, spec: Spectrogram) -> MultimodalImage:
    """Stacks the 16-row intensity strip over the 112-row spectrogram.

    Raises:
        LengthMismatchError: If the strip and spectrogram cover different lengths.
    """
    strip = np.asarray(strip)
    if strip.size != spec.length:
        raise LengthMismatchError(
            f"Strip length {strip.size} does not match spectrogram length {spec.length}."
        )
    pixels = np.vstack(
        [strip_raster(strip), spectrogram_raster(spec, SPEC_ROWS, IMAGE_SIZE)]
    )
    return MultimodalImage(pixels)


def render_multimodal(scaled_values, cfg: MorletConfig | None = None) -> MultimodalImage:
    """Strip + CWT spectrogram of an already scaled context."""
    strip = intensity_strip(scaled_values)
    return compose_multimodal(strip, cwt(scaled_values, cfg))


def render_strip(scaled_values) -> np.ndarray:
    """16x128 strip-only raster."""
    return strip_raster(intensity_strip(scaled_values))


def _line_pixels(r0: int, c0: int, r1: int, c1: int) -> list[tuple[int, int]]:
    """Integer (row, col) pixels on the segment, endpoints included (Bresenham)."""
    pixels = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    step_r = 1 if r1 >= r0 else -1
    step_c = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        pixels.append((r, c))
        if r == r1 and c == c1:
            return pixels
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += step_c
        if e2 < dc:
            err += dc
            r += step_r


def render_lineplot(scaled_values) -> np.ndarray:
    """Black 2-pixel polyline on a white 128x128 canvas.

    x positions are spread evenly over columns 0..127; value 0 lands on row 123
    and value 1 on row 4.
    """
    v = np.clip(np.asarray(scaled_values, dtype=np.float64), 0.0, 1.0)
    canvas = np.full((IMAGE_SIZE, IMAGE_SIZE), 255, dtype=np.uint8)
    if v.size == 0:
        return canvas
    if v.size == 1:
        cols = np.array([IMAGE_SIZE // 2])
    else:
        cols = np.floor(np.arange(v.size) * (IMAGE_SIZE - 1) / (v.size - 1) + 0.5).astype(int)
    rows = np.floor(LINE_BOTTOM_ROW - v * (LINE_BOTTOM_ROW - LINE_TOP_ROW) + 0.5).astype(int)

    points = list(zip(rows.tolist(), cols.tolist()))
    segments = zip(points, points[1:]) if len(points) > 1 else [(points[0], points[0])]
    for (r0, c0), (r1, c1) in segments:
        for r, c in _line_pixels(r0, c0, r1, c1):
            for dr in range(LINE_THICKNESS):
                rr = r + dr
                if 0 <= rr < IMAGE_SIZE and 0 <= c < IMAGE_SIZE:
                    canvas[rr, c] = 0
    return canvas
