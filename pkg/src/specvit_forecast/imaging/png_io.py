import logging
import os

import numpy as np
import png

from ..utils import safe_file_stem

logger = logging.getLogger(__name__)


def raster_filename(series_id: str, kind: str) -> str:
    """`<series_id>_<kind>.png` with unsafe characters replaced."""
    return f"{safe_file_stem(series_id)}_{kind}.png"


def write_png(path: str | os.PathLike, raster: np.ndarray) -> None:
    """Writes a 2-D uint8 array as an 8-bit grayscale, non-interlaced PNG."""
    pixels = np.asarray(raster)
    if pixels.ndim != 2:
        raise ValueError(f"Expected a 2-D raster, got shape {pixels.shape}.")
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    height, width = pixels.shape
    writer = png.Writer(width=width, height=height, greyscale=True, bitdepth=8)
    with open(path, "wb") as handle:
        writer.write(handle, pixels.tolist())
    logger.debug("Wrote %dx%d PNG to %s", width, height, path)


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Reads an 8-bit grayscale PNG back into a uint8 array."""
    width, height, rows, info = png.Reader(filename=str(path)).read()
    if not info.get("greyscale") or info.get("alpha"):
        raise ValueError(f"{path} is not a plain grayscale PNG.")
    return np.vstack([np.asarray(row, dtype=np.uint8) for row in rows]).reshape(height, width)
