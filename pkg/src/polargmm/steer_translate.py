"""Translation operators on steerable coefficients and the pose search grids.

Two operators realize ``T_t`` on a coefficient vector. The vanilla one
decodes, shifts the image and re-encodes (``O(m L^2)`` per call). The cached
one precomputes an affine map so each application is ``O(m^2)``::

    T_t(z) = psi_t z + psi_t_conj conj(z) + mu_t

The conjugate term is needed because images are real: a component with
nonzero frequency also carries its conjugate partner, and a shift mixes the
two. Zero-frequency coefficients are real, so their conjugate column is
folded into ``psi_t``; at ``t = 0`` this makes ``psi_t`` the identity.
Entries are computed against the same bilinear shift the vanilla operator
uses, so the two agree to rounding.
"""

from dataclasses import dataclass
import math

import numpy as np

from .fbspca import PolarCoeff
from .imaging import shift_image


def _as_complex(z):
    return z.to_complex() if isinstance(z, PolarCoeff) else np.asarray(z, dtype=complex)


def translate_vanilla(model, z, t):
    """Decode, shift the image by ``t = (tx, ty)`` pixels, re-encode."""
    zc = _as_complex(z)
    images = model.decode_complex(zc)
    if images.ndim == 2:
        moved = shift_image(images, t)
    else:
        moved = np.stack([shift_image(im, t) for im in images])
    return PolarCoeff.from_complex(model.encode_complex(moved))


@dataclass(frozen=True, eq=False)
class CachedTranslation:
    t: tuple
    psi_t: np.ndarray        # (m, m) complex
    psi_t_conj: np.ndarray   # (m, m) complex, zero columns where omega == 0
    mu_t: np.ndarray         # (m,) complex

    @property
    def m(self):
        return self.mu_t.shape[0]

    def apply(self, z):
        """Affine map on complex coefficients of shape ``(m,)`` or ``(n, m)``."""
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != self.m:
            raise ValueError(f"coefficient length {z.shape[-1]} does not match cache size {self.m}")
        return z @ self.psi_t.T + z.conj() @ self.psi_t_conj.T + self.mu_t


def build_cache(model, t):
    t = (float(t[0]), float(t[1]))
    m = model.m
    flat = model.components.reshape(m, -1)
    moved = np.stack([shift_image(c, t) for c in model.components]).reshape(m, -1)
    half = model.decode_weights / 2
    psi = (flat.conj() @ moved.T) * half
    psi_conj = (flat.conj() @ moved.conj().T) * half
    real_cols = model.omega == 0
    psi[:, real_cols] += psi_conj[:, real_cols]
    psi_conj[:, real_cols] = 0.0
    mean = model.mean_image
    mu = flat.conj() @ (shift_image(mean, t) - mean).ravel()
    return CachedTranslation(t=t, psi_t=psi, psi_t_conj=psi_conj, mu_t=mu)


def translate_cached(cache, z):
    return PolarCoeff.from_complex(cache.apply(_as_complex(z)))


@dataclass(frozen=True)
class TranslationGrid:
    R: float
    n_r: int
    ring_sizes: tuple
    points: np.ndarray       # (n_t, 2), origin first

    def __len__(self):
        return len(self.points)


def ring_size(i):
    # pi / asin(1/2) is exactly 6 but may round to 5.999...; nudge up before floor
    return int(math.floor(math.pi / math.asin(0.5 / i) + 1e-9))


def make_translation_grid(R, n_r):
    """Origin plus ``n_r`` rings; ring ``i`` has ``floor(pi / arcsin(0.5 / i))``
    points at radius ``R i / n_r``, rounded to the nearest pixel."""
    if R < 0 or n_r < 0:
        raise ValueError("R and n_r must be nonnegative")
    points = [(0.0, 0.0)]
    sizes = []
    if R > 0 and n_r > 0:
        for i in range(1, n_r + 1):
            n_theta = ring_size(i)
            sizes.append(n_theta)
            radius = R * i / n_r
            for j in range(n_theta):
                theta = 2 * math.pi * j / n_theta
                points.append((float(np.rint(radius * math.cos(theta))),
                               float(np.rint(radius * math.sin(theta)))))
    pts = np.array(points, dtype=float) + 0.0  # normalize -0.0
    return TranslationGrid(R=float(R), n_r=int(n_r), ring_sizes=tuple(sizes), points=pts)


def build_caches(model, grid):
    return [build_cache(model, p) for p in grid.points]


@dataclass(frozen=True)
class RotationGrid:
    n_alpha: int
    alpha0: float
    angles: np.ndarray

    @property
    def spacing(self):
        return 2 * math.pi / self.n_alpha


def make_rotation_grid(n_alpha, rng_seed=None, alpha0=None):
    """``n_alpha`` equally spaced angles offset by ``alpha0 ~ Unif[0, 2 pi)``.

    ``rng_seed`` may be an int, a ``numpy.random.Generator`` or None; an
    explicit ``alpha0`` overrides the draw.
    """
    if n_alpha < 1:
        raise ValueError(f"n_alpha must be >= 1, got {n_alpha}")
    if alpha0 is None:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        alpha0 = float(rng.uniform(0.0, 2 * math.pi))
    angles = 2 * math.pi * np.arange(n_alpha) / n_alpha + alpha0
    return RotationGrid(n_alpha=int(n_alpha), alpha0=float(alpha0), angles=angles)
