"""Steerable PCA on a Fourier-Bessel basis.

The fit follows the usual steerable construction: expand mean-subtracted
images in the Fourier-Bessel basis, run a separate PCA per angular frequency
block ``k >= 0`` and keep the ``m`` directions with the largest eigenvalues
across blocks. Component ``j`` has angular frequency ``omega[j]`` so that
rotating an image by ``alpha`` advances the phase of ``z[j]`` by
``alpha * omega[j]``.

Images are real, so each component with ``omega != 0`` also stands for its
complex conjugate (frequency ``-omega``). Encoding is ``z = <Psi, I - mu>``;
decoding is ``Re(sum_j c_j z_j Psi_j) + mu`` with ``c_j = 2`` for
``omega_j != 0`` and ``c_j = 1`` otherwise, which makes decode the exact
inverse of encode on the span.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .fb_basis import BandLimitSpec, build_basis, build_index_set

log = logging.getLogger(__name__)

ZERO_VARIANCE_TOL = 1e-12


class ZeroVarianceError(ValueError):
    pass


def centered_fft2(images):
    """Unitary 2D DFT with the spatial and frequency origins at ``L // 2``."""
    shifted = np.fft.ifftshift(images, axes=(-2, -1))
    return np.fft.fftshift(np.fft.fft2(shifted, norm="ortho"), axes=(-2, -1))


def centered_ifft2(spectra):
    shifted = np.fft.ifftshift(spectra, axes=(-2, -1))
    return np.fft.fftshift(np.fft.ifft2(shifted, norm="ortho"), axes=(-2, -1))


def wrap_angle(x):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)


@dataclass(frozen=True)
class PolarCoeff:
    """Magnitudes ``r`` and phases ``phi`` of one or more coefficient vectors.

    Arrays have shape ``(m,)`` for a single image or ``(n, m)`` for a batch.
    """
    r: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        phi = wrap_angle(np.angle(z))
        phi = np.where(r == 0, 0.0, phi)
        return cls(r=r, phi=phi)

    def to_complex(self):
        return self.r * np.exp(1j * self.phi)

    def __len__(self):
        return self.r.shape[0]

    def __getitem__(self, item):
        return PolarCoeff(self.r[item], self.phi[item])

    @property
    def m(self):
        return self.r.shape[-1]


@dataclass(frozen=True, eq=False)
class FbModel:
    components: np.ndarray          # (m, L, L) complex
    mean_image: np.ndarray          # (L, L) real
    omega: np.ndarray               # (m,) int
    eigvals: np.ndarray             # (m,) float
    spec: BandLimitSpec = None
    k_max: int = 0
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_flat", self.components.reshape(self.m, -1))

    @property
    def m(self):
        return self.components.shape[0]

    @property
    def L(self):
        return self.components.shape[-1]

    @property
    def decode_weights(self):
        return np.where(self.omega == 0, 1.0, 2.0)

    def encode_complex(self, images):
        images = np.asarray(images, dtype=float)
        if images.shape[-2:] != (self.L, self.L):
            raise ValueError(f"image shape {images.shape[-2:]} does not match model side {self.L}")
        flat = (images - self.mean_image).reshape(*images.shape[:-2], -1)
        return flat @ self._flat.conj().T

    def decode_complex(self, z):
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.m:
            raise ValueError(f"coefficient length {z.shape[-1]} does not match m={self.m}")
        flat = (z * self.decode_weights) @ self._flat
        return flat.real.reshape(*z.shape[:-1], self.L, self.L) + self.mean_image


def raw_coefficients(basis, images):
    """Fourier-Bessel coefficients ``a_{k,q} = <psi_{k,q}, F(I)>`` per block k >= 0.

    Returns a dict ``k -> (n, p_k)`` array; ``k = 0`` coefficients are real.
    """
    mask = basis.disk_mask
    spectra = centered_fft2(np.asarray(images, dtype=float))[..., mask]
    out = {}
    for k, block in basis.fourier.items():
        coeffs = spectra @ block[:, mask].conj().T
        out[k] = coeffs.real if k == 0 else coeffs
    return out


def _inv_sqrt_psd(gram):
    w, v = np.linalg.eigh(gram)
    return (v / np.sqrt(w)) @ v.conj().T


def _orthonormalize_real_family(components, omega):
    """Symmetric orthonormalization of the real functions spanned by ``components``.

    Components with nonzero frequency contribute ``sqrt(2) Re`` and
    ``sqrt(2) Im``; zero-frequency ones contribute themselves. The
    orthonormalized family is reassembled into complex components, which
    makes ``<Psi_j, Psi_l> = delta`` and ``<Psi_j, conj(Psi_l)> = 0`` hold to
    rounding even though the sampled lattice is not exactly rotation
    invariant.
    """
    m = components.shape[0]
    flat = components.reshape(m, -1)
    rows, slots = [], []
    for j in range(m):
        if omega[j] == 0:
            rows.append(flat[j].real)
            slots.append((j, "r0"))
        else:
            rows.append(np.sqrt(2) * flat[j].real)
            slots.append((j, "re"))
            rows.append(np.sqrt(2) * flat[j].imag)
            slots.append((j, "im"))
    E = np.array(rows)
    E = _inv_sqrt_psd(E @ E.T) @ E
    out = np.zeros_like(flat)
    for row, (j, kind) in zip(E, slots):
        if kind == "r0":
            out[j] = row
        elif kind == "re":
            out[j] += row / np.sqrt(2)
        else:
            out[j] += 1j * row / np.sqrt(2)
    return out.reshape(components.shape)


def fit(images, spec, m=50, basis=None):
    """Fit a steerable PCA model with ``m`` components to a stack of images."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 3 or images.shape[1:] != (spec.image_side, spec.image_side):
        raise ValueError(f"expected a stack of {spec.image_side}x{spec.image_side} images, "
                         f"got shape {images.shape}")
    n = images.shape[0]
    if n < m:
        raise ValueError(f"need at least m={m} images, got {n}")
    if basis is None:
        basis = build_basis(spec, build_index_set(spec))
    available = sum(basis.index.p(k) for k in range(basis.index.k_max + 1))
    if m > available:
        raise ValueError(f"m={m} exceeds the {available} available basis functions")

    mean_image = images.mean(axis=0)
    coeffs = raw_coefficients(basis, images - mean_image)
    mask = basis.disk_mask

    candidates = []   # (eigval, k, index within block)
    block_funcs = {}
    for k in range(basis.index.k_max + 1):
        B = basis.fourier[k][:, mask]                    # (p, npix)
        whiten = _inv_sqrt_psd(B.conj() @ B.T)           # G^{-1/2}
        if k == 0:
            whiten = whiten.real
        a = coeffs[k] @ whiten.T                         # coefficients in the orthonormalized block
        if k == 0:
            cov = (a.T @ a) / n
        else:
            cov = (a.T @ a.conj()) / n
        w, v = np.linalg.eigh(cov)
        order = np.argsort(w)[::-1]
        w, v = np.clip(w[order], 0.0, None), v[:, order]
        # principal functions in Fourier space: sum_q (G^{-1/2} v)_q psi_q
        block_funcs[k] = (whiten @ v, w)
        candidates.extend((float(w[i]), k, i) for i in range(len(w)))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    top = candidates[:m]
    if top[0][0] <= ZERO_VARIANCE_TOL * max(1.0, float(np.mean(images**2))):
        raise ZeroVarianceError("zero variance: the image stack has no variation to fit")

    L = spec.image_side
    comps = np.empty((m, L, L), dtype=complex)
    omega = np.empty(m, dtype=int)
    eigvals = np.empty(m)
    for j, (lam, k, i) in enumerate(top):
        weights, _ = block_funcs[k]
        spectrum = np.tensordot(weights[:, i], basis.fourier[k], axes=(0, 0))
        img = centered_ifft2(spectrum)
        if k == 0:
            img = img.real.astype(complex)
        comps[j] = img
        omega[j] = k
        eigvals[j] = lam
    comps = _orthonormalize_real_family(comps, omega)
    log.debug("fitted %d components, frequencies %s", m, np.unique(omega))
    return FbModel(components=comps, mean_image=mean_image, omega=omega, eigvals=eigvals,
                   spec=spec, k_max=basis.index.k_max)


def encode(model, image):
    """Steerable coefficients of one image or a stack, in polar form."""
    return PolarCoeff.from_complex(model.encode_complex(image))


def decode(model, z):
    if isinstance(z, PolarCoeff):
        z = z.to_complex()
    return model.decode_complex(z)


def rotate(z, alpha, omega):
    """Steer coefficients: the image rotates by ``alpha``, phases by ``alpha * omega``."""
    omega = np.asarray(omega)
    if z.r.shape[-1] != omega.shape[-1]:
        raise ValueError("omega length does not match coefficient length")
    return PolarCoeff(r=z.r, phi=wrap_angle(z.phi + alpha * omega))
