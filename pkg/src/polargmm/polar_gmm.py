"""Gaussian mixture over polar coefficients with circular statistics on phases.

Each cluster is a product of independent 1D Gaussians: one over every
magnitude ``r_j`` on the real line and one over every phase ``phi_j`` using
the wrapped difference ``d(phi, mu) in (-pi, pi]``. The normalizer is the
ordinary 1D Gaussian one for both coordinates; for the phases this is an
approximation that is accurate while ``sigma_phi`` is well below ``pi``.

The phase mean is the exact minimizer of the weighted sum of squared
wrapped distances rather than the ``atan2`` mean direction. With that
choice every M-step maximizes the EM lower bound exactly, so the
full-batch log-likelihood never decreases. ``phase_mean="atan2"`` keeps the
mean-direction update for comparison.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.special import logsumexp

from .fbspca import wrap_angle

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
SIGMA_R_REL_FLOOR = 1e-4
SIGMA_PHI_FLOOR = 1e-3
EMPTY_CLUSTER_MASS = 1e-8
UNIFORM_PHASE_SIGMA = math.pi / math.sqrt(3)


@dataclass(frozen=True)
class ClusterParams:
    mu_r: np.ndarray
    mu_phi: np.ndarray
    sigma_r: np.ndarray
    sigma_phi: np.ndarray


@dataclass(frozen=True)
class MixtureParams:
    pi: np.ndarray
    clusters: tuple

    @property
    def C(self):
        return len(self.clusters)

    @property
    def m(self):
        return self.clusters[0].mu_r.shape[0]

    def stacked(self):
        """``(mu_r, mu_phi, sigma_r, sigma_phi)``, each of shape ``(C, m)``."""
        return tuple(np.stack([getattr(c, f) for c in self.clusters])
                     for f in ("mu_r", "mu_phi", "sigma_r", "sigma_phi"))

    @classmethod
    def from_stacked(cls, pi, mu_r, mu_phi, sigma_r, sigma_phi):
        clusters = tuple(ClusterParams(mu_r[c].copy(), mu_phi[c].copy(), sigma_r[c].copy(),
                                       sigma_phi[c].copy()) for c in range(len(pi)))
        return cls(pi=np.asarray(pi, dtype=float), clusters=clusters)


@dataclass(frozen=True)
class Responsibilities:
    w: np.ndarray              # (n, C)
    underflow: np.ndarray      # (n,) bool, rows reset to uniform


def circ_diff(phi, mu):
    return wrap_angle(np.asarray(phi) - np.asarray(mu))


def cluster_logpdf(sample, M):
    """Log density of one sample (or each row of a batch) under one cluster."""
    r, phi = np.asarray(sample.r, dtype=float), np.asarray(sample.phi, dtype=float)
    if r.shape[-1] != M.mu_r.shape[0]:
        raise ValueError("sample length does not match cluster dimension")
    zr = (r - M.mu_r) / M.sigma_r
    zp = circ_diff(phi, M.mu_phi) / M.sigma_phi
    quad = 0.5 * (zr**2 + zp**2).sum(axis=-1)
    return -quad + _log_normalizer(M.sigma_r, M.sigma_phi)


def _log_normalizer(sigma_r, sigma_phi):
    m = sigma_r.shape[-1]
    return -(np.log(sigma_r) + np.log(sigma_phi)).sum(axis=-1) - m * LOG_2PI


def log_joint(r, phi, theta):
    """``log pi_c + log f_c(sample_i)`` as an ``(n, C)`` array."""
    mu_r, mu_phi, sig_r, sig_phi = theta.stacked()
    zr = (r[:, None, :] - mu_r) / sig_r
    zp = circ_diff(phi[:, None, :], mu_phi) / sig_phi
    quad = 0.5 * (zr**2 + zp**2).sum(axis=-1)
    with np.errstate(divide="ignore"):
        log_pi = np.log(theta.pi)
    return log_pi - quad + _log_normalizer(sig_r, sig_phi)


def log_likelihood(samples, theta):
    """Observed-data log-likelihood ``sum_i log sum_c pi_c f_c(sample_i)``."""
    return float(logsumexp(log_joint(samples.r, samples.phi, theta), axis=1).sum())


def e_step(samples, theta):
    lj = log_joint(samples.r, samples.phi, theta)
    top = lj.max(axis=1, keepdims=True)
    bad = ~np.isfinite(top[:, 0])
    top[bad] = 0.0
    w = np.exp(lj - top)
    if bad.any():
        log.warning("%d samples underflowed in every cluster; using uniform rows", bad.sum())
        w[bad] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    return Responsibilities(w=w, underflow=bad)


def circular_lsq_mean(phi, w):
    """Weighted phase means minimizing ``sum_i w_i d(phi_i, mu)^2``.

    ``phi`` is ``(n, m)``, ``w`` is ``(n, C)``; returns ``(C, m)``. The
    minimizer is the arithmetic mean of the samples unwrapped around it, so
    it is found by trying every cut of the sorted phases: cut ``k`` moves
    the ``k`` smallest phases up by ``2 pi``, and the objective at that
    arrangement's mean is ``Q_k - S_k^2 / W``. The global minimum over cuts
    equals the minimum of the wrapped objective. Ties go to the smallest cut.
    """
    phi = np.asarray(phi, dtype=float)
    order = np.argsort(phi, axis=0, kind="stable")                 # (n, m)
    ps = np.take_along_axis(phi, order, axis=0)                     # (n, m)
    ws = w.T[:, order]                                              # (C, n, m)
    W = ws.sum(axis=1)                                              # (C, m)
    S = (ws * ps).sum(axis=1)
    Q = (ws * ps**2).sum(axis=1)
    # prefix sums over the k smallest phases, k = 0 .. n-1
    zero = np.zeros((ws.shape[0], 1, ws.shape[2]))
    P = np.concatenate([zero, np.cumsum(ws, axis=1)[:, :-1]], axis=1)
    Pphi = np.concatenate([zero, np.cumsum(ws * ps, axis=1)[:, :-1]], axis=1)
    two_pi = 2 * math.pi
    Sk = S[:, None] + two_pi * P
    Qk = Q[:, None] + 2 * two_pi * Pphi + two_pi**2 * P
    Wsafe = np.where(W > 0, W, 1.0)[:, None]
    V = Qk - Sk**2 / Wsafe
    best = np.argmin(V, axis=1)                                     # (C, m)
    mean = np.take_along_axis(Sk, best[:, None], axis=1)[:, 0] / Wsafe[:, 0]
    return wrap_angle(mean)


def circular_atan2_mean(phi, w):
    """Weighted mean direction ``atan2(sum w sin phi, sum w cos phi)``, ``(C, m)``."""
    return wrap_angle(np.arctan2(w.T @ np.sin(phi), w.T @ np.cos(phi)))


def sigma_floors(samples):
    """Per-component floors ``(sigma_r_floor (m,), sigma_phi_floor)``."""
    med = np.median(samples.r, axis=0)
    return np.maximum(SIGMA_R_REL_FLOOR * med, np.finfo(float).tiny), SIGMA_PHI_FLOOR


def _reseed_cluster(samples, w):
    """Cluster centered on the sample the current mixture explains worst."""
    i = int(np.argmin(w.max(axis=1)))
    sig_r = np.maximum(samples.r.std(axis=0), sigma_floors(samples)[0])
    sig_phi = np.full(samples.m, UNIFORM_PHASE_SIGMA)
    return samples.r[i].copy(), samples.phi[i].copy(), sig_r, sig_phi, i


def m_step(samples, w, phase_mean="lsq"):
    """Maximize the EM lower bound for responsibilities ``w`` of shape ``(n, C)``."""
    w = w.w if isinstance(w, Responsibilities) else np.asarray(w, dtype=float)
    r, phi = samples.r, samples.phi
    n, C = w.shape
    mass = w.sum(axis=0)
    safe = np.where(mass > 0, mass, 1.0)
    mu_r = (w.T @ r) / safe[:, None]
    if phase_mean == "lsq":
        mu_phi = circular_lsq_mean(phi, w)
    elif phase_mean == "atan2":
        mu_phi = circular_atan2_mean(phi, w)
    else:
        raise ValueError(f"unknown phase_mean {phase_mean!r}")
    var_r = np.einsum("nc,ncm->cm", w, (r[:, None, :] - mu_r) ** 2) / safe[:, None]
    var_phi = np.einsum("nc,ncm->cm", w, circ_diff(phi[:, None, :], mu_phi) ** 2) / safe[:, None]
    floor_r, floor_phi = sigma_floors(samples)
    sigma_r = np.maximum(np.sqrt(var_r), floor_r)
    sigma_phi = np.maximum(np.sqrt(var_phi), floor_phi)
    pi = mass / n
    for c in np.flatnonzero(mass < EMPTY_CLUSTER_MASS):
        mu_r[c], mu_phi[c], sigma_r[c], sigma_phi[c], i = _reseed_cluster(samples, w)
        log.info("cluster %d emptied; reseeded on sample %d", c, i)
        pi[c] = 1.0 / n
    pi = pi / pi.sum()
    return MixtureParams.from_stacked(pi, mu_r, mu_phi, sigma_r, sigma_phi)


def fit_batch(samples, theta0, n_inner=1, phase_mean="lsq", trace=None):
    """Alternate ``e_step`` and ``m_step`` ``n_inner`` times.

    If ``trace`` is a list, the log-likelihood before the first and after
    every update is appended to it.
    """
    theta = theta0
    if trace is not None:
        trace.append(log_likelihood(samples, theta))
    for _ in range(n_inner):
        theta = m_step(samples, e_step(samples, theta), phase_mean)
        if trace is not None:
            trace.append(log_likelihood(samples, theta))
    return theta


def kmeanspp_seeds(X, C, rng):
    """Indices of ``C`` seed rows of ``X`` chosen by k-means++ D^2 sampling."""
    n = X.shape[0]
    if C > n:
        raise ValueError(f"C={C} exceeds the number of samples {n}")
    seeds = [int(rng.integers(n))]
    d2 = ((X - X[seeds[0]]) ** 2).sum(axis=1)
    for _ in range(1, C):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(np.setdiff1d(np.arange(n), seeds)[0])
        seeds.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(seeds)


def _lloyd(X, centers, n_iter):
    for _ in range(n_iter):
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
        for c in range(len(centers)):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
    return np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)


def init_mixture(samples, C, rng, phase_mean="lsq", lloyd_iters=20):
    """Initial mixture from a k-means partition of the magnitudes.

    Phases of unaligned samples carry no cluster information, so seeding
    (k-means++) and the Lloyd refinement use only the rotation-invariant
    magnitudes ``r``. One M-step on the hard partition gives the mixture.
    """
    X = np.asarray(samples.r, dtype=float)
    seeds = kmeanspp_seeds(X, C, rng)
    labels = _lloyd(X, X[seeds].copy(), lloyd_iters)
    w = np.zeros((X.shape[0], C))
    w[np.arange(X.shape[0]), labels] = 1.0
    return m_step(samples, w, phase_mean)


def predict(samples, theta):
    """Hard labels: argmax responsibility, ties to the lowest cluster index."""
    return np.argmax(log_joint(samples.r, samples.phi, theta), axis=1)
