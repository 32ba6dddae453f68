import numpy as np
import pytest

from polargmm.fb_basis import BandLimitSpec, build_basis, build_index_set
from polargmm.fbspca import fit
from polargmm.simulate import DatasetSpec, render_dataset

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def spec32():
    return BandLimitSpec(32, 0.6, 10.0)


@pytest.fixture(scope="session")
def basis32(spec32):
    return build_basis(spec32, build_index_set(spec32))


@pytest.fixture(scope="session")
def dataset32():
    """Small noisy rotation-and-shift dataset: 3 clusters x 40 images, L=32."""
    spec = DatasetSpec(L=32, n_clusters=3, per_cluster=40, snr=2.0, max_shift=3, seed=11)
    return render_dataset(spec)


@pytest.fixture(scope="session")
def model32(dataset32, spec32, basis32):
    stack, _, _ = dataset32
    return fit(stack, spec32, m=24, basis=basis32)


@pytest.fixture(scope="session")
def spec64():
    return BandLimitSpec(64, 0.6, 10.0)


@pytest.fixture(scope="session")
def model64(spec64):
    """Default-size model (m=50) fit on 3 clusters x 30 noise-free images, L=64."""
    spec = DatasetSpec(L=64, n_clusters=3, per_cluster=30, snr=float("inf"), seed=5)
    stack, _, _ = render_dataset(spec)
    return fit(stack, spec64, m=50)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
