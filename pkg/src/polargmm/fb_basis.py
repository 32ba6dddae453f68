"""Bessel functions, their roots, and discretized Fourier-Bessel basis grids.

Each basis function lives in Fourier space on the disk of radius ``gamma``
(cycles per pixel)::

    psi_{k,q}(rho, phi) = N_{k,q} J_k(R_{k,q} rho / gamma) exp(i k phi),  rho <= gamma

and vanishes outside. ``R_{k,q}`` is the q-th positive root of ``J_k``.
Grids are sampled on the centered ``L x L`` DFT lattice (frequency index
``L // 2`` is DC) and renormalized to unit discrete norm.

The admission rule for ``(k, q)`` is a single bound on the root,
``R_{k,q} <= min(truncation, 1) * pi * gamma * L * radius_ratio``. With the
multiplier at 1 this is the usual sampling criterion ``R <= 2 pi c a`` for
band limit ``c = gamma`` and particle radius ``a = radius_ratio * L / 2``.
Multipliers above 1 would admit more functions than there are Fourier
samples inside the disk, so they are clamped; ``truncation`` below 1 shrinks
the basis.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy import optimize, special

from .imaging import centered_grid

ROOT_XTOL = 1e-12
# Periodic copies summed when sampling the closed-form image-space functions.
IMAGE_SPACE_PERIODS = 3


class EmptyBasisError(ValueError):
    pass


@dataclass(frozen=True)
class BandLimitSpec:
    image_side: int
    radius_ratio: float = 0.6
    truncation: float = 10.0

    def __post_init__(self):
        if int(self.image_side) != self.image_side or self.image_side < 8:
            raise ValueError(f"image_side must be an integer >= 8, got {self.image_side}")
        if not 0.0 < self.radius_ratio <= 1.0:
            raise ValueError(f"radius_ratio must lie in (0, 1], got {self.radius_ratio}")
        if not self.truncation > 0.0:
            raise ValueError(f"truncation must be positive, got {self.truncation}")

    @property
    def band_limit(self):
        """Fourier disk radius gamma in cycles per pixel."""
        return self.radius_ratio * 0.5

    @property
    def root_bound(self):
        return (min(self.truncation, 1.0) * math.pi * self.band_limit
                * self.image_side * self.radius_ratio)


def bessel_j(k, x):
    """Bessel function of the first kind of integer order ``k``.

    Negative orders use ``J_{-k} = (-1)^k J_k``. ``x`` may be a scalar or an
    array of nonnegative finite values.
    """
    if int(k) != k:
        raise ValueError(f"order must be an integer, got {k}")
    k = int(k)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("bessel_j requires finite arguments")
    if np.any(x_arr < 0):
        raise ValueError("bessel_j requires nonnegative arguments")
    val = special.jv(abs(k), x_arr)
    if k < 0 and k % 2:
        val = -val
    return float(val) if np.ndim(x) == 0 else val


def _bracket_roots(k, count):
    """Yield sign-change brackets ``(a, b)`` for the first ``count`` roots of J_k."""
    step = math.pi / 4
    # J_k is positive on (0, j_{k,1}) and j_{k,1} > k.
    a = max(float(k), 1e-3)
    fa = special.jv(k, a)
    found = 0
    while found < count:
        b = a + step
        fb = special.jv(k, b)
        if fa == 0.0:
            yield a, a
            found += 1
        elif fa * fb < 0:
            yield a, b
            found += 1
        a, fa = b, fb


def bessel_roots(k, count):
    """First ``count`` positive roots of ``J_k``, strictly increasing."""
    k = abs(int(k))
    roots = []
    for a, b in _bracket_roots(k, count):
        if a == b:
            roots.append(a)
        else:
            roots.append(optimize.brentq(lambda t: special.jv(k, t), a, b,
                                         xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    return np.array(roots)


def bessel_root(k, q):
    """q-th positive root of ``J_k`` (``q >= 1``)."""
    if q < 1:
        raise ValueError(f"root index q must be >= 1, got {q}")
    return float(bessel_roots(k, q)[-1])


def _roots_below(k, bound):
    roots = []
    for a, b in _bracket_roots(abs(int(k)), 10**9):
        if a > bound:
            break
        r = a if a == b else optimize.brentq(lambda t: special.jv(k, t), a, b,
                                             xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
        if r > bound:
            break
        roots.append(r)
    return roots


@dataclass(frozen=True)
class BesselIndexSet:
    """Admitted ``(k, q)`` pairs with their roots and normalization constants.

    ``roots[k]`` and ``norms[k]`` hold arrays indexed by ``q - 1`` for
    ``k >= 0``; negative ``k`` share the tables of ``|k|``.
    """
    k_max: int
    roots: dict
    norms: dict

    def p(self, k):
        return len(self.roots.get(abs(k), ()))

    @property
    def p_k(self):
        return {k: self.p(k) for k in range(-self.k_max, self.k_max + 1)}

    @property
    def total_count(self):
        return sum(self.p_k.values())

    def nonnegative_pairs(self):
        return [(k, q) for k in range(self.k_max + 1) for q in range(1, self.p(k) + 1)]


def continuous_norm(k, root, gamma):
    """N such that the integral of |psi|^2 over the disk (area measure) is 1."""
    # int_0^gamma J_k(R rho/gamma)^2 rho drho = gamma^2 / 2 * J_{k+1}(R)^2
    return 1.0 / math.sqrt(2 * math.pi * gamma**2 / 2 * special.jv(k + 1, root) ** 2)


def build_index_set(spec):
    bound = spec.root_bound
    roots, norms = {}, {}
    k = 0
    while True:
        rk = _roots_below(k, bound)
        if not rk:
            break
        roots[k] = np.array(rk)
        norms[k] = np.array([continuous_norm(k, r, spec.band_limit) for r in rk])
        k += 1
    if not roots:
        raise EmptyBasisError(
            f"empty basis: root bound {bound:.4g} is below the first root of J_0")
    return BesselIndexSet(k_max=k - 1, roots=roots, norms=norms)


def fourier_polar_grid(L):
    """Radius (cycles/pixel) and angle of every centered DFT lattice point."""
    fx, fy = centered_grid(L)
    return np.hypot(fx, fy) / L, np.arctan2(fy, fx)


@dataclass(frozen=True, eq=False)
class BasisGrid:
    """Sampled basis for ``k >= 0``; ``k < 0`` follows from conjugation.

    ``fourier[k]`` has shape ``(p_k, L, L)``. ``image(k)`` evaluates the
    closed-form image-space functions lazily.
    """
    spec: BandLimitSpec
    index: BesselIndexSet
    fourier: dict
    rho: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)

    @property
    def L(self):
        return self.spec.image_side

    def fourier_block(self, k):
        """Fourier-space grids for any integer ``k`` (negative via conjugation)."""
        if k >= 0:
            return self.fourier[k]
        return (-1) ** (-k) * np.conj(self.fourier[-k])

    @cached_property
    def disk_mask(self):
        return self.rho <= self.spec.band_limit

    def image(self, k):
        """Closed-form image-space functions for block ``k >= 0``, unit norm."""
        return _image_space_block(self.spec, self.index, k)

    def discrete_inverse(self, k):
        """Unitary inverse DFT of the Fourier-space grids of block ``k``."""
        from .fbspca import centered_ifft2
        return centered_ifft2(self.fourier_block(k))


def build_basis(spec, idx):
    L = spec.image_side
    gamma = spec.band_limit
    rho, phi = fourier_polar_grid(L)
    inside = rho <= gamma
    fourier = {}
    for k in range(idx.k_max + 1):
        angular = np.exp(1j * k * phi)
        block = np.empty((idx.p(k), L, L), dtype=complex)
        for qi, (root, norm) in enumerate(zip(idx.roots[k], idx.norms[k])):
            radial = np.where(inside, norm * special.jv(k, root * rho / gamma), 0.0)
            g = radial * angular
            if k == 0:
                g = g.real.astype(complex)
            block[qi] = g / np.linalg.norm(g)
        fourier[k] = block
    return BasisGrid(spec=spec, index=idx, fourier=fourier, rho=rho, phi=phi)


def _image_space_block(spec, idx, k):
    # Inverse FT of psi_{k,q}, with the exp(+2 pi i f.x) convention:
    #   2 pi i^k N gamma^2 R J_k'(R) J_k(2 pi gamma r) / ((2 pi gamma r)^2 - R^2) e^{i k theta}
    # summed over periodic copies so it matches the DFT lattice.
    L = spec.image_side
    gamma = spec.band_limit
    x0, y0 = centered_grid(L)
    P = IMAGE_SPACE_PERIODS
    roots = idx.roots[k]
    out = np.zeros((len(roots), L, L), dtype=complex)
    for mx in range(-P, P + 1):
        for my in range(-P, P + 1):
            x = x0 + mx * L
            y = y0 + my * L
            u = 2 * np.pi * gamma * np.hypot(x, y)
            jk = special.jv(k, u)
            ang = np.exp(1j * k * np.arctan2(y, x))
            for qi, R in enumerate(roots):
                den = u**2 - R**2
                near = np.abs(den) < 1e-9 * R**2
                safe = np.where(near, 1.0, den)
                # removable singularity at u = R: limit J_k'(R) / (2R)
                val = np.where(near, special.jvp(k, R) / (2 * R), jk / safe)
                out[qi] += val * ang
    for qi, R in enumerate(roots):
        out[qi] *= (1j ** k) * special.jvp(k, R) * R
        out[qi] /= np.linalg.norm(out[qi])
    return out
