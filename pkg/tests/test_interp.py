import numpy as np
import pytest

from lamelab._interp import (
    get_backend,
    interp_periodic,
    interp_periodic_components,
    set_backend,
    spline_prefilter,
)
from lamelab.fields import _mode_list, random_band_field
from lamelab.grid import Grid


def eval_band_field(kmin, kmax, seed, extent, pts, peak):
    """Evaluate the continuum band field at arbitrary points (the oracle)."""
    rng = np.random.default_rng(seed)
    out = np.zeros(pts.shape[1])
    for k in _mode_list(2, kmin, kmax):
        arg = 2 * np.pi / extent * (k[0] * pts[0] + k[1] * pts[1])
        a, b = rng.normal(size=2)
        out += a * np.cos(arg) + b * np.sin(arg)
    return out / peak


@pytest.fixture
def query_points():
    rng = np.random.default_rng(1)
    return rng.uniform(-8.0, 8.0, size=(2, 4000))


class TestAccuracy:
    def test_reproduces_nodal_values(self):
        grid = Grid(2, 32, 16.0)
        u = random_band_field(grid, 1, 4, seed=0)
        vals = interp_periodic(u, grid.coords, grid.extent)
        assert np.max(np.abs(vals - u)) < 1e-12

    def test_fourth_order_convergence(self, query_points):
        errs = []
        for n in (64, 128):
            grid = Grid(2, n, 16.0)
            u = random_band_field(grid, 1, 4, seed=0)
            raw = random_band_field(grid, 1, 4, seed=0, normalize=None)
            exact = eval_band_field(1, 4, 0, 16.0, query_points, np.max(np.abs(raw)))
            errs.append(np.max(np.abs(interp_periodic(u, query_points, 16.0) - exact)))
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.4)

    def test_periodic_wrap(self):
        grid = Grid(2, 32, 16.0)
        u = random_band_field(grid, 1, 4, seed=2)
        pts = np.array([[7.9, -8.1], [0.3, 0.3]])  # same physical point
        vals = interp_periodic(u, pts, grid.extent)
        assert vals[0] == pytest.approx(vals[1], abs=1e-12)


class TestBackends:
    def test_backends_agree_bitwise(self, query_points):
        grid = Grid(2, 64, 16.0)
        u = random_band_field(grid, 1, 5, seed=3)
        current = get_backend()
        try:
            set_backend("numba")
            a = interp_periodic(u, query_points, grid.extent)
            set_backend("numpy")
            b = interp_periodic(u, query_points, grid.extent)
        finally:
            set_backend(current)
        assert np.max(np.abs(a - b)) < 1e-14

    def test_rejects_unknown_backend(self):
        with pytest.raises(ValueError):
            set_backend("fortran")

    def test_env_flag_selects_numpy(self):
        import subprocess
        import sys

        code = (
            "import lamelab._interp as i; print(i.get_backend())"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"LAMELAB_NO_NUMBA": "1", "PATH": "/usr/bin:/bin"},
        )
        assert out.stdout.strip() == "numpy"


class TestPrefilter:
    def test_prefilter_roundtrips_through_nodes(self):
        # interpolating the coefficients at the nodes returns the samples
        grid = Grid(2, 32, 16.0)
        u = random_band_field(grid, 1, 6, seed=4)
        coeffs = spline_prefilter(u)
        vals = interp_periodic(coeffs, grid.coords, grid.extent, prefiltered=True)
        assert np.max(np.abs(vals - u)) < 1e-12

    def test_components_wrapper(self):
        grid = Grid(2, 32, 16.0)
        u = random_band_field(grid, 1, 4, seed=5, ncomp=2)
        pts = np.zeros((2, 7))
        vals = interp_periodic_components(u, pts, grid.extent)
        assert vals.shape == (2, 7)
