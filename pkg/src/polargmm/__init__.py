"""Unsupervised 2D classification of noisy, rotated and shifted images.

Images are compressed with a steerable (Fourier-Bessel) PCA, and a Gaussian
mixture over the magnitudes and phases of the coefficients is fit by EM,
alternating with a grid search over rotations and translations.
"""

from .pipeline import PipelineConfig, RunResult, classify

__all__ = ["PipelineConfig", "RunResult", "classify"]
__version__ = "0.1.0"
