from .png_io import raster_filename, read_png, write_png
from .raster import (
    IMAGE_SIZE,
    SPEC_ROWS,
    STRIP_ROWS,
    MultimodalImage,
    compose_multimodal,
    intensity_strip,
    render_lineplot,
    render_multimodal,
    render_strip,
    spectrogram_raster,
    strip_raster,
)
from .wavelet import MorletConfig, Spectrogram, cwt, morlet

__all__ = [
    "IMAGE_SIZE",
    "SPEC_ROWS",
    "STRIP_ROWS",
    "MorletConfig",
    "MultimodalImage",
    "Spectrogram",
    "compose_multimodal",
    "cwt",
    "intensity_strip",
    "morlet",
    "raster_filename",
    "read_png",
    "render_lineplot",
    "render_multimodal",
    "render_strip",
    "spectrogram_raster",
    "strip_raster",
    "write_png",
]
