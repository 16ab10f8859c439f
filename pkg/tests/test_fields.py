import numpy as np
import pytest

from lamelab.fields import (
    checkerboard_density,
    delta_field,
    gaussian_bump,
    plane_wave,
    random_band_field,
    trig_density,
)
from lamelab.grid import Grid, integral, mean_value


class TestBandField:
    def test_continuum_stable_across_resolutions(self):
        # the same seed and band sample one function: coarse nodes are a
        # subset of fine nodes (unnormalized; the max-norm scaling is
        # grid-sampled, so ratios rather than raw fields are refinement-stable)
        coarse = Grid(2, 32, 16.0)
        fine = Grid(2, 64, 16.0)
        uc = random_band_field(coarse, 1, 4, seed=9, normalize=None)
        uf = random_band_field(fine, 1, 4, seed=9, normalize=None)
        assert np.max(np.abs(uf[::2, ::2] - uc)) < 1e-12

    def test_mean_free(self, grid32):
        u = random_band_field(grid32, 1, 5, seed=1)
        assert abs(mean_value(grid32, u)) < 1e-12

    def test_rejects_unresolvable_band(self, grid32):
        with pytest.raises(ValueError):
            random_band_field(grid32, 1, 16, seed=0)

    def test_rejects_dc_band(self, grid32):
        with pytest.raises(ValueError):
            random_band_field(grid32, 0, 3, seed=0)

    def test_vector_components_independent(self, grid32):
        u = random_band_field(grid32, 1, 3, seed=2, ncomp=2)
        assert u.shape == (2,) + grid32.shape
        assert np.max(np.abs(u[0] - u[1])) > 1e-3


class TestDensities:
    @pytest.mark.parametrize("m", [0.5, 0.8])
    def test_bounds_attained(self, grid64, m):
        rho = checkerboard_density(grid64, m)
        assert np.min(rho) >= m - 1e-12
        assert np.max(rho) <= 1.0 / m + 1e-12
        assert np.min(rho) == pytest.approx(m, rel=1e-6)
        assert np.max(rho) == pytest.approx(1.0 / m, rel=1e-6)

    def test_trig_density_plateaus(self, grid64):
        rho = trig_density(grid64, 0.5, seed=3, gain=2.0)
        # hard clipping creates plateaus at both bounds
        assert np.mean(np.isclose(rho, 2.0, rtol=1e-9)) > 0.05
        assert np.mean(np.isclose(rho, 0.5, rtol=1e-9)) > 0.05


class TestSimpleFields:
    def test_delta_unit_integral(self, grid32):
        d = delta_field(grid32, (3, 7))
        assert integral(grid32, d) == pytest.approx(1.0)

    def test_plane_wave_values(self, grid32):
        u = plane_wave(grid32, (1, 0), amplitude=2.0)
        assert u[0, 0] == pytest.approx(2.0 * np.cos(-np.pi))

    def test_bump_center_amplitude(self, grid64):
        u = gaussian_bump(grid64, 0.5, center=(1.0, -2.0), amplitude=3.0)
        idx = tuple(int(round((c + 8.0) / grid64.spacing)) for c in (1.0, -2.0))
        assert u[idx] == pytest.approx(3.0)
