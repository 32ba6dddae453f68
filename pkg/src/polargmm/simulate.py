"""Synthetic labeled datasets with known rotations, shifts and labels.

Templates are sums of anisotropic Gaussian bumps (dark particles on a
flat background), so every pose is rendered analytically instead of by
resampling a raster. Bump widths are bounded below, which keeps the
spectrum effectively inside the Fourier-Bessel band limit. Two template
families exist: ``procedural_blobs`` draws 2D bumps directly, and
``voxel_phantom`` draws one 3D Gaussian-blob phantom and projects it
orthographically along ``n_clusters`` random directions.

An image with pose ``(alpha, t)`` is ``template(R(alpha) (p - t))``: the
template rotated by ``alpha`` (the steering convention in
:mod:`polargmm.imaging`) and then shifted by ``t``.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .imaging import centered_grid, frame_center

MIN_BUMP_SIGMA = 2.5
MAX_BUMP_SIGMA = 4.0
MIN_BUMP_SEPARATION = 6.0
BUMP_SPREAD = 0.85
REFERENCE_L = 64          # bump sizes and spacing above are in pixels at this side
MAX_PLACEMENT_DRAWS = 10000
MAX_PAIR_CORRELATION = 0.8
MAX_SELF_CORRELATION = 0.9
SELF_EXCLUSION_DEG = 30
MAX_TEMPLATE_RETRIES = 10
TEMPLATE_STREAM = 0x7E3
CENTERING_ROUNDS = 3


@dataclass(frozen=True)
class DatasetSpec:
    L: int = 64
    n_clusters: int = 5
    per_cluster: int = 300
    snr: float = 0.2
    max_shift: float = 0.0
    seed: int = 0
    template_kind: str = "procedural_blobs"
    particle_radius: float = 0.6

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if not 0 <= self.max_shift < self.L / 4:
            raise ValueError(f"max_shift must lie in [0, L/4), got {self.max_shift}")
        if self.template_kind not in ("procedural_blobs", "voxel_phantom"):
            raise ValueError(f"unknown template kind {self.template_kind!r}")
        if self.n_clusters < 1 or self.per_cluster < 1:
            raise ValueError("n_clusters and per_cluster must be positive")

    @property
    def n_images(self):
        return self.n_clusters * self.per_cluster

    @property
    def noise_variance(self):
        """Noise variance; templates have unit pixel variance."""
        return 0.0 if math.isinf(self.snr) else 1.0 / self.snr


@dataclass(frozen=True)
class GroundTruth:
    label: int
    alpha_true: float
    t_true: tuple


@dataclass(frozen=True, eq=False)
class Template:
    """Analytic template: ``scale * (-sum_b amp_b exp(-q_b / 2) - offset)``."""
    centers: np.ndarray      # (n, 2) as (x, y)
    precisions: np.ndarray   # (n, 2, 2)
    amplitudes: np.ndarray   # (n,)
    offset: float = 0.0
    scale: float = 1.0

    def render(self, L, alpha=0.0, t=(0.0, 0.0)):
        return self.render_many(L, [alpha], t)[0]

    def render_many(self, L, alphas, t=(0.0, 0.0)):
        """Render at each angle in ``alphas``; returns ``(len(alphas), L, L)``."""
        x, y = centered_grid(L)
        alphas = np.asarray(alphas, dtype=float)[:, None, None]
        ca, sa = np.cos(alphas), np.sin(alphas)
        xs, ys = x - t[0], y - t[1]
        u = ca * xs - sa * ys
        v = sa * xs + ca * ys
        acc = np.zeros(u.shape)
        for c, P, a in zip(self.centers, self.precisions, self.amplitudes):
            du, dv = u - c[0], v - c[1]
            q = P[0, 0] * du * du + 2 * P[0, 1] * du * dv + P[1, 1] * dv * dv
            acc -= a * np.exp(-0.5 * q)
        return self.scale * (acc - self.offset)

    def normalized(self, L):
        raw = Template(self.centers, self.precisions, self.amplitudes).render(L)
        return Template(self.centers, self.precisions, self.amplitudes,
                        offset=float(raw.mean()), scale=1.0 / float(raw.std()))

    def centered(self, L, n_rounds=CENTERING_ROUNDS):
        """Move the bumps so the EM centering estimate sits on the frame center.

        A zero ground-truth shift then means "already centered" for the
        pipeline's own centering stage.
        """
        from .em_center import fit_center
        c0 = frame_center(L)
        out = self
        for _ in range(n_rounds):
            row, col = fit_center(out.render(L)).center
            offset = np.array([col - c0, row - c0])
            out = Template(out.centers - offset, out.precisions, out.amplitudes,
                           out.offset, out.scale)
        return out.normalized(L)


def _mass_centered(centers, masses):
    # put the particle's center of mass on the rotation center
    return centers - (masses[:, None] * centers).sum(0) / masses.sum()


def _random_cov2(rng, lo, hi):
    s = rng.uniform(lo, hi, size=2)
    th = rng.uniform(0, math.pi)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return R @ np.diag(s**2) @ R.T


def _place_separated(n, draw, min_sep):
    """Up to ``n`` points from ``draw()`` at least ``min_sep`` apart.

    Gives up after ``MAX_PLACEMENT_DRAWS`` draws and keeps what was placed,
    so a crowded disk yields fewer bumps instead of looping forever.
    """
    centers = []
    for _ in range(MAX_PLACEMENT_DRAWS):
        if len(centers) == n:
            break
        c = draw()
        if c is not None and all(math.dist(c, d) >= min_sep for d in centers):
            centers.append(c)
    return centers


def _procedural(rng, spec):
    radius = spec.particle_radius * spec.L / 2
    scale = spec.L / REFERENCE_L
    n = int(rng.integers(4, 9))

    def draw():
        rr = radius * BUMP_SPREAD * math.sqrt(rng.uniform())
        th = rng.uniform(0, 2 * math.pi)
        return (rr * math.cos(th), rr * math.sin(th))

    # separated bumps keep the layout legible instead of one merged blob
    centers = _place_separated(n, draw, MIN_BUMP_SEPARATION * scale)
    n = len(centers)
    precisions = [np.linalg.inv(_random_cov2(rng, MIN_BUMP_SIGMA * scale,
                                             MAX_BUMP_SIGMA * scale))
                  for _ in range(n)]
    amps = rng.uniform(0.5, 1.0, size=n)
    centers = np.array(centers)
    masses = amps / np.sqrt(np.linalg.det(precisions))
    return Template(_mass_centered(centers, masses), np.array(precisions), amps)


def _random_rotation3(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    return np.array([
        [a*a + b*b - c*c - d*d, 2*(b*c - a*d), 2*(b*d + a*c)],
        [2*(b*c + a*d), a*a - b*b + c*c - d*d, 2*(c*d - a*b)],
        [2*(b*d - a*c), 2*(c*d + a*b), a*a - b*b - c*c + d*d],
    ])


def _phantom(rng, spec):
    """A few separated 3D Gaussian blobs inside a ball.

    Projections of 3D Gaussians are 2D Gaussians, so every view renders
    analytically. Few blobs keep views along different directions distinct.
    """
    radius = spec.particle_radius * spec.L / 2 * BUMP_SPREAD
    scale = spec.L / REFERENCE_L
    n = int(rng.integers(4, 9))

    def draw():
        p = rng.uniform(-radius, radius, size=3)
        return p if p @ p <= radius * radius else None

    centers = _place_separated(n, draw, MIN_BUMP_SEPARATION * scale)
    n = len(centers)
    covs = []
    for _ in range(n):
        s = rng.uniform(MIN_BUMP_SIGMA * scale, MAX_BUMP_SIGMA * scale, size=3)
        Q = _random_rotation3(rng)
        covs.append(Q @ np.diag(s**2) @ Q.T)
    amps = rng.uniform(0.2, 1.0, size=n)
    covs = np.array(covs)
    masses = amps * np.sqrt(np.linalg.det(covs))
    return _mass_centered(np.array(centers), masses), covs, amps


def _project(centers, covs, amps, Rot):
    # view frame: rows of Rot; integrate along the third axis
    c2 = centers @ Rot.T
    cov2 = np.einsum("ij,njk,lk->nil", Rot, covs, Rot)[:, :2, :2]
    mass = amps * np.sqrt(np.linalg.det(covs) / np.linalg.det(cov2)) * math.sqrt(2 * math.pi)
    # 2D bumps; amplitude carries the integrated mass along the line of sight
    return Template(c2[:, :2], np.linalg.inv(cov2), mass / mass.max())


def max_rotation_correlation(ta, tb, L, step_deg=1.0, exclude_deg=0.0):
    """Largest NCC between ``ta`` and rotations of ``tb`` on a ``step_deg`` scan.

    Angles within ``exclude_deg`` of zero are skipped (for self-symmetry checks).
    """
    degs = np.arange(0.0, 360.0, step_deg)
    if exclude_deg:
        degs = degs[np.minimum(degs, 360.0 - degs) >= exclude_deg]
    base = ta.render(L).ravel()
    base = base - base.mean()
    rotated = tb.render_many(L, np.radians(degs)).reshape(len(degs), -1)
    rotated = rotated - rotated.mean(axis=1, keepdims=True)
    num = rotated @ base
    den = np.sqrt((rotated**2).sum(axis=1) * (base @ base))
    return float((num / den).max())


def _acceptable(candidate, accepted, L, step_deg):
    if max_rotation_correlation(candidate, candidate, L, step_deg,
                                SELF_EXCLUSION_DEG) > MAX_SELF_CORRELATION:
        return False
    return all(max_rotation_correlation(prev, candidate, L, step_deg) <= MAX_PAIR_CORRELATION
               for prev in accepted)


def _draw_set(spec, rng, step_deg):
    phantom = _phantom(rng, spec) if spec.template_kind == "voxel_phantom" else None
    templates = []
    while len(templates) < spec.n_clusters:
        for _ in range(MAX_TEMPLATE_RETRIES):
            if phantom is None:
                raw = _procedural(rng, spec)
            else:
                raw = _project(*phantom, _random_rotation3(rng))
            candidate = raw.centered(spec.L)
            if _acceptable(candidate, templates, spec.L, step_deg):
                templates.append(candidate)
                break
        else:
            return None
    return templates


def make_templates(spec, check_step_deg=1.0):
    """``n_clusters`` zero-mean, unit-variance templates, pairwise distinct.

    Templates are drawn one at a time and screened on a ``check_step_deg``
    rotation scan: each must correlate at most 0.8 with every earlier one
    under every rotation, and may not match itself under a rotation of 30
    degrees or more. After 10 rejections in a row the whole set is redrawn
    from the next seed stream (for phantoms, a new volume); 10 failed sets
    raise.
    """
    for attempt in range(MAX_TEMPLATE_RETRIES):
        rng = np.random.default_rng([spec.seed, TEMPLATE_STREAM, attempt])
        templates = _draw_set(spec, rng, check_step_deg)
        if templates is not None:
            return templates
    raise RuntimeError(f"could not draw {spec.n_clusters} distinct templates "
                       f"in {MAX_TEMPLATE_RETRIES} attempts")


def sample_disk(rng, radius):
    while True:
        t = rng.uniform(-radius, radius, size=2)
        if t @ t <= radius * radius:
            return float(t[0]), float(t[1])


def _labels(spec):
    labels = np.repeat(np.arange(spec.n_clusters), spec.per_cluster)
    return np.random.default_rng([spec.seed, TEMPLATE_STREAM + 1]).permutation(labels)


def render_image(spec, templates, index, label):
    """Render one image from its own ``(seed, index)`` random stream."""
    rng = np.random.default_rng([spec.seed, index])
    alpha = float(rng.uniform(-math.pi, math.pi))
    t = sample_disk(rng, spec.max_shift) if spec.max_shift > 0 else (0.0, 0.0)
    clean = templates[label].render(spec.L, alpha, t)
    if spec.noise_variance > 0:
        clean = clean + rng.normal(scale=math.sqrt(spec.noise_variance), size=clean.shape)
    return clean, GroundTruth(label=int(label), alpha_true=alpha, t_true=t)


def render_dataset(spec, templates=None, threads=1):
    """Render the full stack; returns ``(stack, truths, templates)``."""
    from .parallel import parallel_map
    if templates is None:
        templates = make_templates(spec)
    labels = _labels(spec)
    out = parallel_map(lambda i: render_image(spec, templates, i, labels[i]),
                       list(range(spec.n_images)), threads)
    stack = np.stack([o[0] for o in out])
    return stack, [o[1] for o in out], templates


GT_HEADER = ["index", "label", "alpha_rad", "tx", "ty"]


def write_ground_truth(truths, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for i, g in enumerate(truths):
            w.writerow([i, g.label, f"{g.alpha_true:.17g}", f"{g.t_true[0]:.17g}",
                        f"{g.t_true[1]:.17g}"])


class MalformedFileError(ValueError):
    pass


def read_ground_truth(path):
    truths = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != GT_HEADER:
            raise MalformedFileError(f"{path}: line 1: expected header {','.join(GT_HEADER)}")
        for lineno, row in enumerate(rows, start=2):
            try:
                if len(row) != 5:
                    raise ValueError(f"expected 5 fields, got {len(row)}")
                index, label = int(row[0]), int(row[1])
                alpha, tx, ty = float(row[2]), float(row[3]), float(row[4])
            except ValueError as exc:
                raise MalformedFileError(f"{path}: line {lineno}: {exc}") from None
            if index != len(truths):
                raise MalformedFileError(f"{path}: line {lineno}: index {index} out of order")
            truths.append(GroundTruth(label=label, alpha_true=alpha, t_true=(tx, ty)))
    return truths
