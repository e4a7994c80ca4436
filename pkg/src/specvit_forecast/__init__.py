"""Forecasting with wavelet spectrogram images and a from-scratch vision transformer."""

__version__ = "0.1.0"
