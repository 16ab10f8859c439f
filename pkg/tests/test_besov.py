import numpy as np
import pytest
import scipy.special

from lamelab.besov import (
    BesovIndex,
    BoundaryLeakageWarning,
    DyadicPartition,
    besov_norm,
    besov_norm_report,
    default_partition,
    dyadic_block,
    heat_char_norm,
    heat_time_nodes,
    multiplier_ratio,
    product_law_ratio,
)
from lamelab.fields import gaussian_bump, plane_wave, random_band_field
from lamelab.grid import Grid, fftn, lp_norm, mean_free
from lamelab.operators import LameParams, ScaledLaplacian


@pytest.fixture(scope="module")
def gridpi():
    # L = 2 pi makes integer modes k sit at |xi| = |k|, handy for block tests
    return Grid(2, 64, 2 * np.pi)


class TestIndex:
    def test_rejects_large_s(self):
        with pytest.raises(ValueError):
            BesovIndex(2.0, 2.0, 1.0)

    def test_rejects_small_p(self):
        with pytest.raises(ValueError):
            BesovIndex(0.5, 0.5, 1.0)


class TestPartition:
    def test_partition_of_unity(self, grid32, gridpi):
        for grid in (grid32, gridpi):
            part = DyadicPartition.for_grid(grid)
            total = sum(part.masks)
            nz = grid.freq_sq > 0
            assert np.max(np.abs(total[nz] - 1.0)) < 1e-12
            assert np.max(np.abs(total[~nz])) == 0.0

    def test_support_annuli(self, gridpi):
        part = DyadicPartition.for_grid(gridpi)
        r = np.sqrt(gridpi.freq_sq)
        for j in part.levels:
            chi = part.mask(j)
            outside = (r < 2.0 ** (j - 1) - 1e-9) | (r > 2.0 ** (j + 1) + 1e-9)
            assert np.max(np.abs(chi[outside])) == 0.0

    def test_rejects_out_of_range_level(self, gridpi):
        part = DyadicPartition.for_grid(gridpi)
        with pytest.raises(ValueError):
            part.mask(part.j_max + 1)


class TestDyadicBlock:
    def test_mode_in_core_annulus_passes(self, gridpi):
        u = plane_wave(gridpi, (4, 0))  # |xi| = 4 = 2^2 sits where chi_2 = 1
        assert np.max(np.abs(dyadic_block(gridpi, u, 2) - u)) < 1e-12
        assert np.max(np.abs(dyadic_block(gridpi, u, 1))) < 1e-12
        assert np.max(np.abs(dyadic_block(gridpi, u, 3))) < 1e-12

    def test_constant_annihilated(self, gridpi):
        u = np.full(gridpi.shape, 2.0)
        part = default_partition(gridpi)
        for j in part.levels:
            assert np.max(np.abs(dyadic_block(gridpi, u, j))) < 1e-13

    def test_blocks_reconstruct(self, gridpi):
        u = mean_free(gridpi, random_band_field(gridpi, 1, 8, seed=1))
        part = default_partition(gridpi)
        total = sum(dyadic_block(gridpi, u, j) for j in part.levels)
        assert np.max(np.abs(total - u)) < 1e-12


class TestBesovNorm:
    def test_zero_field(self, gridpi):
        assert besov_norm(gridpi, np.zeros(gridpi.shape), BesovIndex(0.5, 2.0, 1.0)) == 0.0

    def test_homogeneity(self, gridpi):
        u = random_band_field(gridpi, 1, 6, seed=2)
        idx = BesovIndex(0.5, 2.0, 1.0)
        a = besov_norm(gridpi, 3.7 * u, idx)
        b = 3.7 * besov_norm(gridpi, u, idx)
        assert a == pytest.approx(b, rel=1e-12)

    @pytest.mark.parametrize("s", [-0.5, 0.0, 1.0])
    def test_single_annulus_bump(self, gridpi, s):
        # spectrum at |xi| = 2^j: norm = 2^{js} ||u||_p within the overlap factor
        j, p = 2, 2.0
        u = plane_wave(gridpi, (4, 0))
        val = besov_norm(gridpi, u, BesovIndex(s, p, 1.0))
        ref = 2.0 ** (j * s) * lp_norm(gridpi, u, p)
        assert 0.5 * ref <= val <= 2.0 * ref

    def test_plancherel_comparison(self, gridpi):
        # s = 0, p = r = 2: within [1/K, K] of the L2 norm with K <= 2
        for seed in range(5):
            u = mean_free(gridpi, random_band_field(gridpi, 1, 8, seed=seed))
            val = besov_norm(gridpi, u, BesovIndex(0.0, 2.0, 2.0))
            l2 = lp_norm(gridpi, u, 2.0)
            assert l2 / 2.0 <= val <= 2.0 * l2

    def test_block_contraction(self, gridpi):
        u = random_band_field(gridpi, 1, 8, seed=4)
        idx = BesovIndex(0.5, 2.0, 1.0)
        part = default_partition(gridpi)
        total = besov_norm_report(gridpi, u, idx, part).value
        for j in part.levels:
            blocked = besov_norm_report(gridpi, dyadic_block(gridpi, u, j), idx, part).value
            assert blocked <= total * (1 + 1e-10)

    def test_p2_fast_path_matches_physical(self, gridpi):
        # Plancherel shortcut must agree with the Riemann-sum route
        u = random_band_field(gridpi, 1, 6, seed=5)
        part = default_partition(gridpi)
        fast = besov_norm_report(gridpi, u, BesovIndex(0.3, 2.0, 1.0), part)
        slow_levels = [
            2.0 ** (j * 0.3) * lp_norm(gridpi, dyadic_block(gridpi, u, j), 2.0)
            for j in part.levels
        ]
        assert fast.value == pytest.approx(sum(slow_levels), rel=1e-12)

    def test_leakage_warning_fires(self, gridpi):
        # the lowest resolvable mode sits entirely in the first block
        u = plane_wave(gridpi, (1, 0))
        with pytest.warns(BoundaryLeakageWarning):
            besov_norm(gridpi, u, BesovIndex(0.5, 2.0, 1.0))


class TestHeatCharacterization:
    def test_zero_field(self, grid64, params):
        v = np.zeros((2,) + grid64.shape)
        assert heat_char_norm(grid64, v, 0.5, 2.0, 1.0, 1, params) == 0.0

    def test_rejects_bad_k(self, grid64, params):
        v = np.zeros((2,) + grid64.shape)
        with pytest.raises(ValueError):
            heat_char_norm(grid64, v, 0.5, 2.0, 1.0, 0, params)

    def test_gaussian_bump_against_per_mode_integral(self, grid64):
        # p = q = 2, k = 1: Plancherel turns the quadrature into per-mode
        # integrals int t^{1-s} |xi|^4 e^{-2t|xi|^2} dt/t = G(2-s) (2|xi|^2)^(s-2) |xi|^4
        # s = 1 leaves only first-order decay of the profile at small t, so the
        # node range starts far below the grid scale to kill truncation
        s, k = 1.0, 1
        u = gaussian_bump(grid64, 1.0)
        u = mean_free(grid64, u)
        nodes = 1e-7 * 2.0 ** (0.5 * np.arange(70))  # covers [1e-7, 3e3]
        val = heat_char_norm(grid64, u, s, 2.0, 2.0, k, ScaledLaplacian(1.0), t_nodes=nodes)
        u_hat = fftn(grid64, u)
        c = grid64.cell_volume / grid64.size * np.abs(u_hat) ** 2
        xi2 = grid64.freq_sq.copy()
        xi2[xi2 == 0.0] = np.inf
        weights = xi2**2 * scipy.special.gamma(2 - s) * (2 * xi2) ** (s - 2.0)
        weights[~np.isfinite(weights)] = 0.0
        exact = float(np.sqrt(np.sum(c * weights)))
        assert val == pytest.approx(exact, rel=1e-4)

    @pytest.mark.parametrize("s", [0.5, -0.5, 0.0])
    @pytest.mark.parametrize("gen_name", ["laplacian", "lame"])
    def test_equivalence_with_lp_norm(self, grid64, params, s, gen_name):
        gen = ScaledLaplacian(1.0) if gen_name == "laplacian" else params
        u = random_band_field(grid64, 2, 6, seed=7, ncomp=2)
        hv = heat_char_norm(grid64, u, s, 2.0, 1.0, 1, gen)
        bv = besov_norm(grid64, u, BesovIndex(s, 2.0, 1.0))
        ratio = hv / bv
        assert 0.2 <= ratio <= 5.0


class TestMultiplier:
    def test_constant_multiplier(self, grid32):
        rho = np.full(grid32.shape, 1.7)
        fields = [random_band_field(grid32, 1, 4, seed=s) for s in range(3)]
        r = multiplier_ratio(grid32, rho, BesovIndex(0.0, 2.0, 1.0), fields)
        assert r == pytest.approx(1.7, rel=1e-10)

    def test_identity_multiplier(self, grid32):
        fields = [random_band_field(grid32, 1, 4, seed=5)]
        r = multiplier_ratio(grid32, np.ones(grid32.shape), BesovIndex(0.0, 2.0, 1.0), fields)
        assert r == pytest.approx(1.0, rel=1e-12)

    def test_rejects_empty_test_set(self, grid32):
        with pytest.raises(ValueError):
            multiplier_ratio(grid32, np.ones(grid32.shape), BesovIndex(0.0, 2.0, 1.0), [])

    def test_smooth_multiplier_stable_under_refinement(self):
        # the same continuum rho and probes, two resolutions: within 20%
        vals = []
        for n in (32, 64):
            grid = Grid(2, n, 16.0)
            rho = 1.25 + 0.75 * np.sin(2 * np.pi * grid.coords[0] / grid.extent) * np.cos(
                2 * np.pi * grid.coords[1] / grid.extent
            )
            fields = [random_band_field(grid, 1, 4, seed=s, ncomp=2) for s in range(6)]
            vals.append(multiplier_ratio(grid, rho, BesovIndex(0.0, 2.0, 1.0), fields))
        assert abs(vals[1] - vals[0]) / vals[0] < 0.2


class TestProductLaw:
    def test_single_bump_finite(self, grid64):
        u = mean_free(grid64, gaussian_bump(grid64, 1.0))
        r = product_law_ratio(grid64, u, u, 2.0)
        assert 0 < r < 10

    def test_scaling_invariance(self, grid64):
        u = random_band_field(grid64, 1, 4, seed=8)
        v = random_band_field(grid64, 1, 4, seed=9)
        a = product_law_ratio(grid64, u, v, 2.0)
        b = product_law_ratio(grid64, u, 5.0 * v, 2.0)
        assert a == pytest.approx(b, rel=1e-12)

    def test_rejects_zero_factor(self, grid64):
        u = random_band_field(grid64, 1, 4, seed=8)
        with pytest.raises(ValueError):
            product_law_ratio(grid64, u, np.zeros(grid64.shape), 2.0)

    def test_bounded_and_stable_under_refinement(self):
        # 50 pairs of the same continuum fields on N and 2N
        maxima = []
        for n in (32, 64):
            grid = Grid(2, n, 16.0)
            worst = 0.0
            for s in range(50):
                u = random_band_field(grid, 1, 4, seed=100 + s)
                v = random_band_field(grid, 1, 4, seed=600 + s)
                worst = max(worst, product_law_ratio(grid, u, v, 2.0))
            maxima.append(worst)
        assert maxima[1] == pytest.approx(maxima[0], rel=0.2)

    def test_mixed_variant_finite(self, grid64):
        u = random_band_field(grid64, 1, 4, seed=10)
        v = random_band_field(grid64, 1, 4, seed=11)
        assert 0 < product_law_ratio(grid64, u, v, 2.0, mixed=True) < 10


def test_heat_time_nodes_cover_resolvable_scales(grid32, params):
    nodes = heat_time_nodes(grid32, params)
    c = min(params.mu, params.nu)
    assert nodes[0] == pytest.approx(grid32.spacing**2 / c)
    assert nodes[-1] >= grid32.extent**2 / c
