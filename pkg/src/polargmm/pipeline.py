"""End-to-end classification: centering, steerable PCA, alignment and EM.

Stage order:

1. EM centering of every image (only when translation search is on).
2. Steerable PCA fit and encoding.
3. Mixture initialization: several k-means starts, each warmed up by a few
   rotation-only align/update rounds; the start with the highest batch
   log-likelihood is kept.
4. ``n_iter`` rounds of: draw a batch, align it over the rotation and
   translation grids, one EM update. With translation on, each cluster's
   frame is then re-anchored on its class average (see
   :func:`anchor_frames`).
5. Final alignment of the whole dataset and hard labels. With translation
   on, each class's shifts are then corrected so its average is centered
   (see :func:`recenter_shifts`). Class averages come last.

Every random draw comes from a counter-based stream keyed on
``(seed, stage, index)``, so results do not depend on thread count.
"""

from dataclasses import dataclass, field, fields, replace
import logging
import math

import numpy as np

from . import polar_gmm
from .aligner import align_batch
from .em_center import center_stack, fit_center
from .fb_basis import BandLimitSpec
from .fbspca import PolarCoeff, fit as fit_fbspca, wrap_angle
from .imaging import frame_center, rigid_warp
from .metrics import score_all
from .steer_translate import build_caches, make_translation_grid, translate_vanilla

log = logging.getLogger(__name__)

INIT_STREAM, BATCH_STREAM, ROTATION_STREAM, FINAL_STREAM = 1, 2, 3, 4


class DataError(ValueError):
    """Input data that cannot be processed as requested."""


@dataclass(frozen=True)
class PipelineConfig:
    radius_ratio: float = 0.6
    truncation: float = 10.0
    m: int = 50
    C: int = 10
    B: int = 5000
    n_alpha: int = 60
    n_r: int = 4
    max_shift: float = 15.0
    n_citer: int = 10
    n_iter: int = 10
    seed: int = 0
    enable_translation: bool = True
    center: bool = True
    freeze_align: bool = False
    n_init: int = 8
    n_warmup: int = 3
    anchor: bool = True
    threads: int = 1

    @property
    def runs_centering(self):
        return self.enable_translation and self.center

    def with_overrides(self, values):
        """Copy with ``key -> string`` overrides parsed to each field's type."""
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, raw in values.items():
            if key not in types:
                raise DataError(f"unknown config key {key!r}")
            parsed[key] = _parse_value(key, raw, types[key])
        return replace(self, **parsed)


def _parse_value(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    name = typ if isinstance(typ, str) else typ.__name__
    try:
        if name == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if name == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise DataError(f"config key {key!r}: cannot parse {raw!r} as {name}") from None


@dataclass
class RunResult:
    labels: np.ndarray
    alpha: np.ndarray            # predicted rotation per image, (-pi, pi]
    t: np.ndarray                # predicted translation per image, (n, 2)
    averages: np.ndarray         # (C, L, L)
    report: dict = None
    trace: list = field(default_factory=list)
    model: object = None
    theta: object = None
    n_translations: int = 1


def _rng(config, stream, index=0):
    return np.random.default_rng([config.seed, stream, index])


def _batch_indices(config, n, it):
    if config.B >= n:
        return np.arange(n)
    idx = _rng(config, BATCH_STREAM, it).choice(n, size=config.B, replace=False)
    return np.sort(idx)


def class_averages(images, labels, alpha, shifts, C):
    """Per-cluster mean of ``rigid_warp(image, alpha, shift)``; empty clusters are zero."""
    L = images.shape[-1]
    out = np.zeros((C, L, L))
    counts = np.zeros(C, dtype=int)
    for img, lab, a, s in zip(images, labels, alpha, shifts):
        out[lab] += rigid_warp(img, a, s)
        counts[lab] += 1
    nz = counts > 0
    out[nz] /= counts[nz, None, None]
    return out


def anchor_frames(model, theta, images, alignment, labels):
    """Shift each cluster mean so its class average is centered.

    The mixture only fixes a cluster's frame up to a common rigid motion,
    and with translation search the frames drift over iterations. Each
    cluster's class average (its members warped by their current poses) is
    centered with the EM estimator, and the cluster mean is translated by
    the negated offset. Spreads are left unchanged.
    """
    mu_r, mu_phi, sig_r, sig_phi = theta.stacked()
    z = mu_r * np.exp(1j * mu_phi)
    avgs = class_averages(images, labels, alignment.alpha, alignment.t, theta.C)
    c0 = frame_center(images.shape[-1])
    for c in range(theta.C):
        if not np.any(labels == c):
            continue
        res = fit_center(avgs[c])
        if res.degenerate:
            continue
        offset = (res.center[1] - c0, res.center[0] - c0)
        log.debug("cluster %d: class average offset (%.3f, %.3f)", c, *offset)
        z[c] = translate_vanilla(model, z[c], (-offset[0], -offset[1])).to_complex()
    return polar_gmm.MixtureParams.from_stacked(theta.pi, np.abs(z), np.angle(z), sig_r, sig_phi)


def recenter_shifts(images, labels, alpha, shifts, C):
    """Warp shifts that put each class average's EM center on the frame center.

    ``rigid_warp(image, alpha, shift)`` maps an image into its class frame.
    If the class average is centered at ``s`` instead of the origin, then
    replacing ``shift`` by ``shift - R(alpha) s`` moves every member, and so
    the average, by exactly ``-s``. This fixes the frame offset left over
    by :func:`anchor_frames` without another lossy coefficient translation.
    """
    shifts = np.array(shifts, dtype=float)
    avgs = class_averages(images, labels, alpha, shifts, C)
    c0 = frame_center(images.shape[-1])
    for c in range(C):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        res = fit_center(avgs[c])
        if res.degenerate:
            continue
        s = np.array([res.center[1] - c0, res.center[0] - c0])
        log.debug("cluster %d: final average offset (%.3f, %.3f)", c, *s)
        ca, sa = np.cos(alpha[members]), np.sin(alpha[members])
        shifts[members, 0] -= ca * s[0] - sa * s[1]
        shifts[members, 1] -= sa * s[0] + ca * s[1]
    return shifts


def _warm_start(config, Z, model, origin_cache, trace):
    """Best of ``n_init`` initializations after rotation-only warm-up rounds."""
    n = Z.shape[0]
    best = None
    for r in range(config.n_init):
        rng = _rng(config, INIT_STREAM, r)
        idx = np.arange(n) if config.B >= n else np.sort(rng.choice(n, config.B, replace=False))
        Zb = Z[idx]
        theta = polar_gmm.init_mixture(PolarCoeff.from_complex(Zb), config.C, rng)
        for _ in range(config.n_warmup):
            res = align_batch(Zb, theta, model.omega, origin_cache, config.n_alpha, rng,
                              threads=config.threads)
            theta = polar_gmm.fit_batch(res.aligned, theta)
        res = align_batch(Zb, theta, model.omega, origin_cache, config.n_alpha, rng,
                          threads=config.threads)
        ll = polar_gmm.log_likelihood(res.aligned, theta)
        log.info("start %d: batch log-likelihood %.6f", r, ll)
        if best is None or ll > best[0]:
            best = (ll, r, theta)
    log.info("keeping start %d", best[1])
    return best[2]


def classify(stack, config, truth=None):
    """Run the full pipeline on an ``(n, L, L)`` stack.

    ``truth`` is an optional list of ground-truth records; when given, the
    result carries a metric report.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DataError(f"expected an (n, L, L) stack, got shape {stack.shape}")
    n, L, _ = stack.shape
    if truth is not None and len(truth) != n:
        raise DataError(f"ground truth has {len(truth)} rows but the stack has {n} images")
    distinct = len(np.unique(stack.reshape(n, -1), axis=0))
    if config.C > distinct:
        raise DataError(f"C={config.C} exceeds the {distinct} distinct images in the stack")

    if config.runs_centering:
        centered, offsets = center_stack(stack, config.n_citer, config.threads)
    else:
        centered, offsets = stack, np.zeros((n, 2))

    spec = BandLimitSpec(L, config.radius_ratio, config.truncation)
    try:
        model = fit_fbspca(centered, spec, config.m)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    Z = model.encode_complex(centered)

    if config.enable_translation:
        grid = make_translation_grid(config.max_shift, config.n_r)
    else:
        grid = make_translation_grid(0, 0)
    caches = build_caches(model, grid)
    origin = caches[:1]
    log.info("translation grid: %d points", len(grid))

    trace = []
    if config.freeze_align:
        theta = polar_gmm.init_mixture(PolarCoeff.from_complex(Z), config.C,
                                       _rng(config, INIT_STREAM))
        frozen = align_batch(Z, theta, model.omega, caches, config.n_alpha,
                             _rng(config, ROTATION_STREAM), threads=config.threads)
        theta = polar_gmm.fit_batch(frozen.aligned, theta, config.n_iter, trace=trace)
    else:
        theta = _warm_start(config, Z, model, origin, trace)
        for it in range(config.n_iter):
            idx = _batch_indices(config, n, it)
            res = align_batch(Z[idx], theta, model.omega, caches, config.n_alpha,
                              _rng(config, ROTATION_STREAM, it), threads=config.threads)
            theta = polar_gmm.fit_batch(res.aligned, theta)
            ll = polar_gmm.log_likelihood(res.aligned, theta)
            trace.append(ll)
            log.info("iteration %d: batch log-likelihood %.6f", it, ll)
            if config.enable_translation and config.anchor:
                labels = polar_gmm.predict(res.aligned, theta)
                theta = anchor_frames(model, theta, centered[idx], res, labels)

    final = align_batch(Z, theta, model.omega, caches, config.n_alpha,
                        _rng(config, FINAL_STREAM), threads=config.threads)
    labels = polar_gmm.predict(final.aligned, theta)
    # the sample is R(a) T(t) of the class frame; report the inverse motion
    alpha_pred = wrap_angle(-final.alpha)
    shifts = final.t - offsets
    if config.enable_translation and config.anchor:
        shifts = recenter_shifts(stack, labels, final.alpha, shifts, config.C)
    t_pred = -shifts
    averages = class_averages(stack, labels, final.alpha, shifts, config.C)

    result = RunResult(labels=labels, alpha=alpha_pred, t=t_pred, averages=averages,
                       trace=trace, model=model, theta=theta, n_translations=len(grid))
    if truth is not None:
        result.report = score_all(
            [g.label for g in truth], labels,
            alpha_true=[g.alpha_true for g in truth], t_true=[g.t_true for g in truth],
            alpha_pred=alpha_pred, t_pred=t_pred, translation=config.enable_translation)
    return result


def describe_grid(config):
    grid = make_translation_grid(config.max_shift if config.enable_translation else 0,
                                 config.n_r if config.enable_translation else 0)
    return len(grid), math.pi / config.n_alpha
