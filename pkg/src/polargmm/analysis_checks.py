"""Empirical checks of the structure the method relies on.

``gram_check`` measures how far each sampled Fourier-Bessel block is from
unitary. ``covariance_rank_check`` returns the spectrum of one frequency
block's sample covariance; for noise-free data made of rotated copies of
``K`` centers it has at most ``K`` non-negligible eigenvalues.
"""

from dataclasses import dataclass

import numpy as np

from .fb_basis import BasisGrid
from .fbspca import FbModel, raw_coefficients


@dataclass(frozen=True)
class GramReport:
    k: int
    max_offdiag: float
    max_diag_dev: float


def gram_check(basis, k):
    """Deviation of the discrete Gram matrix of block ``k`` from the identity."""
    block = basis.fourier_block(k)
    flat = block.reshape(block.shape[0], -1)
    gram = flat.conj() @ flat.T
    diag = np.diag(gram)
    off = gram - np.diag(diag)
    return GramReport(k=int(k), max_offdiag=float(np.abs(off).max(initial=0.0)),
                      max_diag_dev=float(np.abs(diag - 1).max()))


def gram_check_all(basis):
    return [gram_check(basis, k) for k in range(basis.index.k_max + 1)]


def block_coefficients(source, images, k):
    """Coefficients of frequency ``k`` for each image.

    ``source`` is a ``BasisGrid`` (raw Fourier-Bessel coefficients, all radial
    indices) or an ``FbModel`` (encoded coefficients of the components with
    ``omega == k``).
    """
    if isinstance(source, BasisGrid):
        return raw_coefficients(source, images)[k]
    if isinstance(source, FbModel):
        return source.encode_complex(images)[:, source.omega == k]
    raise TypeError(f"expected BasisGrid or FbModel, got {type(source).__name__}")


def block_covariance_eigvals(coeffs):
    """Eigenvalues, descending, of the centered sample covariance of ``(n, p)`` rows."""
    a = np.asarray(coeffs)
    a = a - a.mean(axis=0)
    cov = a.T @ a.conj() / a.shape[0]
    return np.sort(np.clip(np.linalg.eigvalsh(cov), 0.0, None))[::-1]


def covariance_rank_check(images, source, k, coeffs=None):
    """Spectrum of the block-``k`` covariance of a dataset.

    Pass ``coeffs`` to use precomputed block coefficients instead of
    encoding ``images``.
    """
    if coeffs is None:
        coeffs = block_coefficients(source, images, k)
    return block_covariance_eigvals(coeffs)


def steered_coefficients(center_coeffs, alphas, k):
    """Exact rotations in coefficient space: ``a e^{i k alpha}`` per sample.

    ``center_coeffs`` is ``(K, p)`` and ``alphas`` is ``(K, n)``; returns the
    ``(K * n, p)`` stack. This removes pixel-lattice resampling error, which
    would otherwise sit far above a ``1e-6`` relative threshold.
    """
    center_coeffs = np.asarray(center_coeffs)
    alphas = np.asarray(alphas, dtype=float)
    phase = np.exp(1j * k * alphas)[:, :, None]
    return (center_coeffs[:, None, :] * phase).reshape(-1, center_coeffs.shape[1])


def relative_tail(eigvals, rank):
    """Largest eigenvalue beyond ``rank`` divided by the leading one."""
    eigvals = np.asarray(eigvals)
    if len(eigvals) <= rank or eigvals[0] == 0:
        return 0.0
    return float(eigvals[rank:].max() / eigvals[0])
