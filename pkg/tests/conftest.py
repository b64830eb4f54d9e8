import numpy as np
import pytest
from hypothesis import settings

from korteweg.fourier import SpectralField, make_grid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_field(grid, rng, components=None, decay=0.0, mask=True):
    shape = grid.shape if components is None else (components,) + grid.shape
    c = np.fft.fftn(rng.standard_normal(shape), axes=grid.axes) / grid.size
    k = np.maximum(grid.xi_norm, grid.dk)
    c = c * k**-decay
    if mask:
        c = c * grid.dealias_mask
    c[..., grid.nyquist] = 0.0
    return SpectralField(grid, c)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return make_grid(2, 32, 2 * np.pi)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {}) if mod else {}
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
