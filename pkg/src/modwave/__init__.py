"""Gridless denoising of complex exponentials with subspace-modulated waveforms."""

__version__ = "0.1.0"
