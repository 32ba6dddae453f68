"""Grid search for the pose that maximizes the mixture density of a sample.

For each translation ``t`` in the grid the cached operator gives
``T_t(z)``; rotations then only advance phases, so the magnitude part of the
score is computed once per ``(t, cluster)`` and the phase part per angle.
The score is the full mixture ``log sum_c pi_c f_c``. Among equal scores
the smallest translation norm wins, then the smallest angle in
``[0, 2 pi)``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

from .fbspca import PolarCoeff, wrap_angle
from .parallel import chunks, parallel_map
from .polar_gmm import LOG_2PI, log_joint
from .steer_translate import make_rotation_grid

TWO_PI = 2 * math.pi
CHUNK = 128


@dataclass(frozen=True)
class PoseEstimate:
    alpha: float
    t: tuple
    score: float
    cluster_hint: int


@dataclass(frozen=True)
class BatchAlignment:
    alpha: np.ndarray        # (n,) in [0, 2 pi)
    t: np.ndarray            # (n, 2)
    t_index: np.ndarray      # (n,)
    score: np.ndarray        # (n,)
    cluster_hint: np.ndarray  # (n,)
    aligned: PolarCoeff      # R_alpha T_t z for every sample
    alpha0: float

    def __len__(self):
        return len(self.alpha)

    def pose(self, i):
        return PoseEstimate(alpha=float(self.alpha[i]), t=tuple(self.t[i]),
                            score=float(self.score[i]), cluster_hint=int(self.cluster_hint[i]))


def _search_order(caches, angles):
    t_norm = np.array([math.hypot(*c.t) for c in caches])
    t_order = np.lexsort((np.arange(len(caches)), t_norm))
    a_mod = np.mod(angles, TWO_PI)
    a_order = np.lexsort((np.arange(len(angles)), a_mod))
    return t_order, a_order, a_mod


def _chunk_search(z, theta, omega, caches, angles, t_order, a_order):
    """Best (t index, angle index, score) for each row of ``z``."""
    mu_r, mu_phi, sig_r, sig_phi = theta.stacked()
    with np.errstate(divide="ignore"):
        log_pi = np.log(theta.pi)
    const = log_pi - (np.log(sig_r) + np.log(sig_phi)).sum(axis=1) - theta.m * LOG_2PI
    prec_r = 0.5 / sig_r**2                                    # (C, m)
    prec_phi = 0.5 / sig_phi**2
    rot = angles[a_order][:, None] * omega[None, :]            # (A, m)
    n = z.shape[0]
    best = np.full(n, -np.inf)
    best_t = np.zeros(n, dtype=int)
    best_a = np.zeros(n, dtype=int)
    for ti in t_order:
        y = caches[ti].apply(z)
        r, phi = np.abs(y), np.angle(y)
        r_term = ((r[:, None, :] - mu_r) ** 2 * prec_r).sum(axis=2)       # (n, C)
        d = phi[:, None, None, :] + rot[None, :, None, :] - mu_phi[None, None]
        d -= TWO_PI * np.rint(d / TWO_PI)
        p_term = (d * d * prec_phi).sum(axis=3)                           # (n, A, C)
        scores = logsumexp(const - r_term[:, None, :] - p_term, axis=2)   # (n, A)
        ai = np.argmax(scores, axis=1)
        s = scores[np.arange(n), ai]
        better = s > best
        best[better] = s[better]
        best_t[better] = ti
        best_a[better] = a_order[ai[better]]
    return best_t, best_a, best


def align_batch(z, theta, omega, caches, n_alpha=None, rng=None, rot_grid=None,
                threads=1):
    """Align every sample in ``z`` (complex, ``(n, m)``) to the mixture.

    A fresh rotation grid with a random offset is drawn from ``rng`` unless
    ``rot_grid`` is given; it is shared by the whole batch.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    omega = np.asarray(omega)
    if rot_grid is None:
        rot_grid = make_rotation_grid(n_alpha, rng)
    angles = rot_grid.angles
    t_order, a_order, a_mod = _search_order(caches, angles)

    def work(span):
        lo, hi = span
        return _chunk_search(z[lo:hi], theta, omega, caches, angles, t_order, a_order)

    parts = parallel_map(work, chunks(z.shape[0], CHUNK), threads)
    t_idx = np.concatenate([p[0] for p in parts])
    a_idx = np.concatenate([p[1] for p in parts])
    score = np.concatenate([p[2] for p in parts])

    aligned_c = np.empty_like(z)
    for ti in np.unique(t_idx):
        rows = t_idx == ti
        aligned_c[rows] = caches[ti].apply(z[rows])
    alpha = a_mod[a_idx]
    aligned = PolarCoeff.from_complex(aligned_c)
    aligned = PolarCoeff(r=aligned.r, phi=wrap_angle(aligned.phi + alpha[:, None] * omega))
    hint = _cluster_hint(aligned, theta)
    t = np.array([caches[i].t for i in t_idx], dtype=float).reshape(-1, 2)
    return BatchAlignment(alpha=alpha, t=t, t_index=t_idx, score=score, cluster_hint=hint,
                          aligned=aligned, alpha0=rot_grid.alpha0)


def _cluster_hint(aligned, theta):
    return np.argmax(log_joint(aligned.r, aligned.phi, theta), axis=1)


def align_sample(z, theta, rot_grid, caches, omega):
    """Best pose of a single coefficient vector over the product grid."""
    if isinstance(z, PolarCoeff):
        z = z.to_complex()
    res = align_batch(np.asarray(z)[None], theta, omega, caches, rot_grid=rot_grid)
    return res.pose(0)
