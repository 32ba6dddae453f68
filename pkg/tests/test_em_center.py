import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polargmm.em_center import (_samples, center_stack, default_init, fit_center,
                                responsibilities)
from polargmm.imaging import shift_image
from polargmm.simulate import DatasetSpec, render_dataset


def dark_blob(L=64, center=(32.0, 32.0), sigma=5.0, depth=1.0, background=2.0):
    rows, cols = np.indices((L, L), dtype=float)
    d2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return background - depth * np.exp(-d2 / (2 * sigma**2))


@pytest.fixture(scope="module")
def clean_stack():
    spec = DatasetSpec(L=64, n_clusters=3, per_cluster=8, snr=float("inf"), seed=21)
    return render_dataset(spec)[0]


def test_dark_blob_center():
    res = fit_center(dark_blob())
    assert not res.degenerate
    assert np.all(np.abs(res.center - [32, 32]) <= 0.5)


def test_center_equivariance():
    base = fit_center(dark_blob()).center
    moved = fit_center(dark_blob(center=(39.0, 27.0))).center
    assert np.all(np.abs((moved - base) - [7, -5]) <= 1.0)


@settings(max_examples=20, deadline=None)
@given(dr=st.integers(-8, 8), dc=st.integers(-8, 8))
def test_center_equivariance_integer_shifts(dr, dc):
    base = fit_center(dark_blob()).center
    moved = fit_center(dark_blob(center=(32.0 + dr, 32.0 + dc))).center
    assert np.all(np.abs((moved - base) - [dr, dc]) <= 1.0)


def test_constant_image_is_degenerate():
    res = fit_center(np.full((64, 64), 3.0))
    assert res.degenerate
    assert np.array_equal(res.center, [32, 32])


def test_n_citer_must_be_positive():
    with pytest.raises(ValueError):
        fit_center(dark_blob(), n_citer=0)


def test_loglik_monotone_noisy_images():
    spec = DatasetSpec(L=64, n_clusters=2, per_cluster=5, snr=0.2, max_shift=8, seed=3)
    stack = render_dataset(spec)[0]
    for img in stack:
        trace = fit_center(img, n_citer=10).loglik
        assert len(trace) >= 2
        assert np.all(np.diff(trace) >= -1e-9)


def test_responsibilities_are_probabilities():
    img = dark_blob() + np.random.default_rng(0).normal(scale=0.3, size=(64, 64))
    lo, hi = img.min(), img.max()
    samples, L = _samples((img - lo) / (hi - lo))
    params = fit_center(img).params
    w = responsibilities(samples, params, L)
    assert np.all((w >= 0) & (w <= 1))
    # direct two-component posterior with full Gaussian normalizers
    d = samples - params.mu_s
    inv = np.linalg.inv(params.sigma_s)
    f_s = (np.exp(-0.5 * np.einsum("ni,ij,nj->n", d, inv, d))
           / np.sqrt((2 * np.pi) ** 3 * np.linalg.det(params.sigma_s)))
    f_b = (np.exp(-0.5 * ((samples[:, 2] - params.mu_b) / params.sigma_b) ** 2)
           / (np.sqrt(2 * np.pi) * params.sigma_b * L * L))
    num_s, num_b = params.weight_s * f_s, (1 - params.weight_s) * f_b
    assert np.allclose(w, num_s / (num_s + num_b), atol=1e-12)
    assert np.allclose(w + num_b / (num_s + num_b), 1.0, atol=1e-12)


def test_default_init_polarity():
    img = dark_blob()
    samples, _ = _samples((img - img.min()) / (img.max() - img.min()))
    p = default_init(samples)
    assert p.mu_s[2] < p.mu_b
    assert p.sigma_b > 0
    assert np.all(np.linalg.eigvalsh(p.sigma_s) > 0)


def test_fitted_params_valid():
    p = fit_center(dark_blob()).params
    assert np.allclose(p.sigma_s, p.sigma_s.T)
    assert np.all(np.linalg.eigvalsh(p.sigma_s) > 0)
    assert p.sigma_b > 0 and 0 < p.weight_s < 1


def test_center_stack_already_centered(clean_stack):
    _, offsets = center_stack(clean_stack)
    assert np.max(np.abs(offsets)) <= 1.0


def test_center_stack_uniform_shift(clean_stack):
    moved = np.stack([shift_image(img, (10, 0), fill=float(np.median(img)))
                      for img in clean_stack])
    _, offsets = center_stack(moved)
    assert np.all(np.abs(offsets.mean(axis=0) - [10, 0]) <= 1.0)


def test_center_stack_idempotent(clean_stack):
    moved = np.stack([shift_image(img, (4, -6), fill=float(np.median(img)))
                      for img in clean_stack])
    once, _ = center_stack(moved)
    _, residual = center_stack(once)
    assert np.max(np.abs(residual)) <= 1.0


def test_center_stack_degenerate_gets_zero_shift():
    stack = np.stack([np.zeros((32, 32)), dark_blob(32, (16, 16), 3.0)])
    out, offsets = center_stack(stack)
    assert np.array_equal(offsets[0], [0, 0])
    assert np.array_equal(out[0], stack[0])


def test_center_stack_thread_independent(clean_stack):
    a = center_stack(clean_stack[:6], threads=1)
    b = center_stack(clean_stack[:6], threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_center_stack_rejects_empty():
    with pytest.raises(ValueError):
        center_stack(np.zeros((0, 16, 16)))
