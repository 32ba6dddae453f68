"""Coarse particle centering by a two-component EM fit over pixels.

Every pixel becomes a sample ``p = (row, col, intensity)``. A signal
component models the particle as a 3D Gaussian over position and intensity;
a background component is uniform over the frame and Gaussian in
intensity. Both carry full normalizers, so responsibilities are well
defined, and the signal weight is learned by EM alongside the other
parameters (a fixed 1/2 lets noise pixels drag the particle toward the
frame center). Particles are assumed darker than the background.
Intensities are min-max scaled to [0, 1] per image.
"""

from dataclasses import dataclass

import numpy as np

from .imaging import frame_center, shift_image

COV_RIDGE = 1e-6
SIGMA_B_FLOOR = 1e-6
LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class CenteringParams:
    mu_s: np.ndarray       # (row, col, intensity)
    sigma_s: np.ndarray    # 3x3
    mu_b: float
    sigma_b: float
    weight_s: float = 0.5


@dataclass(frozen=True)
class CenteringResult:
    center: np.ndarray     # (row, col)
    params: CenteringParams
    degenerate: bool
    loglik: list


def _samples(image):
    L = image.shape[0]
    rows, cols = np.indices(image.shape, dtype=float)
    return np.column_stack([rows.ravel(), cols.ravel(), image.ravel()]), L


def default_init(samples):
    c = samples[:, 2]
    weight = c.max() - c
    pos = samples[:, :2]
    mu_pos = (weight[:, None] * pos).sum(0) / weight.sum()
    spread = (weight[:, None] * (pos - mu_pos) ** 2).sum(0) / weight.sum()
    median = float(np.median(c))
    low = float(np.quantile(c, 0.1))
    sd = float(c.std())
    mu_s = np.array([mu_pos[0], mu_pos[1], min(low, median - 0.5 * sd)])
    sigma_s = np.diag([spread[0], spread[1], sd**2])
    return CenteringParams(mu_s=mu_s, sigma_s=sigma_s, mu_b=median, sigma_b=sd)


def _log_densities(samples, params, L):
    d = samples - params.mu_s
    chol = np.linalg.cholesky(params.sigma_s)
    sol = np.linalg.solve(chol, d.T)
    log_s = -0.5 * (sol**2).sum(0) - np.log(np.diag(chol)).sum() - 1.5 * LOG_2PI
    c = samples[:, 2]
    log_b = (-0.5 * ((c - params.mu_b) / params.sigma_b) ** 2 - np.log(params.sigma_b)
             - 0.5 * LOG_2PI - 2 * np.log(L))
    return log_s + np.log(params.weight_s), log_b + np.log1p(-params.weight_s)


def log_likelihood(samples, params, L):
    log_s, log_b = _log_densities(samples, params, L)
    return float(np.sum(np.logaddexp(log_s, log_b)))


def responsibilities(samples, params, L):
    """Posterior probability that each pixel belongs to the signal component."""
    log_s, log_b = _log_densities(samples, params, L)
    return np.exp(log_s - np.logaddexp(log_s, log_b))


def _m_step(samples, w):
    ws = w.sum()
    mu_s = (w[:, None] * samples).sum(0) / ws
    d = samples - mu_s
    sigma_s = (w[:, None] * d).T @ d / ws
    sigma_s += COV_RIDGE * np.trace(sigma_s) / 3 * np.eye(3)
    wb = 1.0 - w
    wbs = wb.sum()
    mu_b = float((wb * samples[:, 2]).sum() / wbs)
    sigma_b = float(np.sqrt((wb * (samples[:, 2] - mu_b) ** 2).sum() / wbs))
    sigma_b = max(sigma_b, SIGMA_B_FLOOR)
    return CenteringParams(mu_s=mu_s, sigma_s=sigma_s, mu_b=mu_b, sigma_b=sigma_b,
                           weight_s=float(ws / len(w)))


def fit_center(image, n_citer=10, init=None):
    """Estimate the particle center ``(row, col)`` of one image."""
    if n_citer < 1:
        raise ValueError(f"n_citer must be >= 1, got {n_citer}")
    image = np.asarray(image, dtype=float)
    L = image.shape[0]
    lo, hi = image.min(), image.max()
    c0 = float(frame_center(L))
    if not hi > lo:
        params = CenteringParams(mu_s=np.array([c0, c0, 0.0]), sigma_s=np.eye(3),
                                 mu_b=0.0, sigma_b=1.0)
        return CenteringResult(center=np.array([c0, c0]), params=params,
                               degenerate=True, loglik=[])
    samples, _ = _samples((image - lo) / (hi - lo))
    params = default_init(samples) if init is None else init
    trace = [log_likelihood(samples, params, L)]
    for _ in range(n_citer):
        w = responsibilities(samples, params, L)
        if w.sum() < 1e-9 or (1 - w).sum() < 1e-9:
            break
        params = _m_step(samples, w)
        trace.append(log_likelihood(samples, params, L))
    return CenteringResult(center=params.mu_s[:2].copy(), params=params,
                           degenerate=False, loglik=trace)


def center_stack(images, n_citer=10, threads=1):
    """Shift every image so its estimated center lands on the frame center.

    Returns the shifted stack and the estimated particle offsets
    ``(tx, ty)`` from the frame center (columns, rows); each image is moved
    by the negated offset. Pixels uncovered by the shift are filled with the
    image median, so the fill does not read as a dark particle edge on a
    second pass. Degenerate images get a zero offset.
    """
    from .parallel import parallel_map
    images = np.asarray(images, dtype=float)
    if images.shape[0] == 0:
        raise ValueError("center_stack needs a nonempty stack")
    c0 = float(frame_center(images.shape[-1]))

    def one(img):
        res = fit_center(img, n_citer)
        if res.degenerate:
            return img.copy(), np.zeros(2)
        offset = np.array([res.center[1] - c0, res.center[0] - c0])
        return shift_image(img, -offset, fill=float(np.median(img))), offset

    out = parallel_map(one, list(images), threads)
    return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])
