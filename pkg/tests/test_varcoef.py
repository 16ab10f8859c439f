import numpy as np
import pytest

from lamelab.fields import checkerboard_density, plane_wave, random_band_field, trig_density
from lamelab.grid import Grid, lp_norm
from lamelab.operators import LameParams, const_semigroup
from lamelab.varcoef import (
    Coefficient,
    SolverConvergenceError,
    StepperConfig,
    dense_oracle_expm,
    dense_semigroup_matrix,
    energy_dissipation_check,
    evolve,
    momentum_integral,
    weighted_norm,
)


@pytest.fixture(scope="module")
def rough16():
    grid = Grid(2, 16, 8.0)
    return Coefficient(grid, checkerboard_density(grid, 0.5), 0.5)


class TestCoefficient:
    def test_reciprocal_exact(self, grid32):
        rho = trig_density(grid32, 0.5, seed=1)
        coef = Coefficient(grid32, rho, 0.5)
        assert np.max(np.abs(coef.b * coef.rho - 1.0)) < 1e-14

    def test_rejects_range_violation(self, grid32):
        rho = np.full(grid32.shape, 3.0)
        with pytest.raises(ValueError):
            Coefficient(grid32, rho, 0.5)

    def test_rejects_bad_m(self, grid32):
        with pytest.raises(ValueError):
            Coefficient(grid32, np.ones(grid32.shape), 1.5)

    def test_density_generators_respect_bounds(self, grid32):
        for rho in (checkerboard_density(grid32, 0.5), trig_density(grid32, 0.5, seed=2)):
            assert np.min(rho) >= 0.5 - 1e-12
            assert np.max(rho) <= 2.0 + 1e-12


class TestStepperConfig:
    def test_rejects_bad_theta(self):
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, theta=0.3)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            StepperConfig(dt=0.0)

    def test_rejects_unknown_operator(self):
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, operator="magic")


class TestEvolve:
    def test_constant_density_matches_exact_semigroup(self, grid32, params):
        coef = Coefficient.constant(grid32, 1.0)
        u0 = random_band_field(grid32, 1, 4, seed=1, ncomp=2)
        traj = evolve(coef, params, u0, [0.0, 0.05, 0.2], StepperConfig(dt=5e-4))
        for i, t in enumerate((0.05, 0.2)):
            exact = const_semigroup(grid32, u0, t, params)
            err = lp_norm(grid32, traj[i + 1] - exact, 2) / lp_norm(grid32, exact, 2)
            assert err < 1e-6

    def test_zero_initial_state(self, rough16, params):
        u0 = np.zeros((2,) + rough16.grid.shape)
        traj = evolve(rough16, params, u0, [0.0, 0.1], StepperConfig(dt=1e-2))
        assert np.max(np.abs(traj)) == 0.0

    def test_constant_vector_is_equilibrium(self, rough16, params):
        u0 = np.ones((2,) + rough16.grid.shape)
        u0[1] = -0.5
        traj = evolve(rough16, params, u0, [0.0, 0.3], StepperConfig(dt=1e-2))
        assert np.max(np.abs(traj[-1] - u0)) < 1e-9

    def test_momentum_conserved(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=2, ncomp=2) + 0.3
        traj = evolve(rough16, params, u0, [0.0, 0.1, 0.4], StepperConfig(dt=5e-3))
        p0 = momentum_integral(rough16, u0)
        budget = 1e-8 * lp_norm(rough16.grid, u0, 1)
        for u in traj[1:]:
            assert np.max(np.abs(momentum_integral(rough16, u) - p0)) <= budget

    def test_second_order_in_dt(self, grid32, params):
        coef = Coefficient.constant(grid32, 1.0)
        u0 = random_band_field(grid32, 1, 4, seed=3, ncomp=2)
        t = 0.1
        exact = const_semigroup(grid32, u0, t, params)
        errs = []
        for dt in (2e-3, 1e-3):
            traj = evolve(coef, params, u0, [0.0, t], StepperConfig(dt=dt))
            errs.append(lp_norm(grid32, traj[-1] - exact, 2))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)

    def test_rejects_bad_time_grid(self, rough16, params):
        u0 = np.zeros((2,) + rough16.grid.shape)
        with pytest.raises(ValueError):
            evolve(rough16, params, u0, [0.1, 0.2], StepperConfig(dt=1e-2))

    def test_cg_failure_raises_with_residual(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=4, ncomp=2)
        cfg = StepperConfig(dt=1e-2, cg_tol=1e-14, cg_maxiter=1)
        with pytest.raises(SolverConvergenceError) as err:
            evolve(rough16, params, u0, [0.0, 0.1], cfg)
        assert err.value.residual > 0

    def test_forcing_reaches_steady_state(self, grid32, params):
        # with f = -L w held fixed, u relaxes toward w, which is an exact
        # fixed point of the theta scheme; slowest rate here is mu (2pi k/L)^2
        coef = Coefficient.constant(grid32, 1.0)
        from lamelab.operators import lame_apply

        w = random_band_field(grid32, 2, 3, seed=5, ncomp=2)
        f = -lame_apply(grid32, w, params)
        t_grid = np.linspace(0.0, 16.0, 65)
        forcing = np.broadcast_to(f, (65,) + f.shape).copy()
        traj = evolve(coef, params, np.zeros_like(w), t_grid, StepperConfig(dt=0.1), forcing=forcing)
        rel = lp_norm(grid32, traj[-1] - w, 2) / lp_norm(grid32, w, 2)
        assert rel < 1e-3


class TestDissipation:
    def test_single_mode_exact_rate(self, grid32, params):
        # divergence-free mode decays at exp(-mu |xi|^2 t) in the rho = 1 norm
        coef = Coefficient.constant(grid32, 1.0)
        xi = 2 * np.pi * np.array([1.0, 0.0]) / grid32.extent
        u0 = np.stack([np.zeros(grid32.shape), plane_wave(grid32, (1, 0))])
        t_grid = [0.0, 0.5, 1.0]
        traj = evolve(coef, params, u0, t_grid, StepperConfig(dt=2e-3))
        rep = energy_dissipation_check(coef, params, traj, t_grid)
        for t, norm in zip(rep.times, rep.norms):
            expected = np.exp(-params.mu * np.dot(xi, xi) * t) * rep.norms[0]
            assert norm == pytest.approx(expected, rel=1e-5)

    def test_rough_density_monotone(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=6, ncomp=2)
        t_grid = np.linspace(0.0, 0.5, 11)
        traj = evolve(rough16, params, u0, t_grid, StepperConfig(dt=5e-3))
        rep = energy_dissipation_check(rough16, params, traj, t_grid)
        assert rep.monotone, f"uptick {rep.max_uptick}"

    def test_equilibrium_norm_constant(self, rough16, params):
        u0 = np.ones((2,) + rough16.grid.shape)
        t_grid = [0.0, 0.2, 0.4]
        traj = evolve(rough16, params, u0, t_grid, StepperConfig(dt=1e-2))
        rep = energy_dissipation_check(rough16, params, traj, t_grid)
        assert rep.norms[-1] == pytest.approx(rep.norms[0], rel=1e-9)


class TestDenseOracle:
    def test_t_zero_identity(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=7, ncomp=2)
        out = dense_oracle_expm(rough16, params, u0, 0.0)
        assert np.max(np.abs(out - u0)) < 1e-12

    def test_weighted_symmetry(self, rough16, params):
        # e^{t b L} times multiplication by b is symmetric
        grid = rough16.grid
        mat = dense_semigroup_matrix(rough16, params, 0.1)
        bdiag = np.broadcast_to(rough16.b, (grid.dim,) + grid.shape).ravel()
        sym = mat * bdiag[None, :]
        assert np.max(np.abs(sym - sym.T)) / np.max(np.abs(sym)) < 1e-10

    def test_constant_density_against_spectral(self, params):
        # stencil discretization error decays O(h^2)
        errs = []
        for n in (16, 32):
            grid = Grid(2, n, 8.0)
            coef = Coefficient.constant(grid, 1.0)
            u0 = random_band_field(grid, 1, 2, seed=8, ncomp=2)
            t = 0.1
            oracle = dense_oracle_expm(coef, params, u0, t)
            exact = const_semigroup(grid, u0, t, params)
            errs.append(lp_norm(grid, oracle - exact, 2) / lp_norm(grid, exact, 2))
        assert errs[0] < 2e-2
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.35)

    def test_evolve_agrees_with_oracle(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=9, ncomp=2)
        cfg = StepperConfig(dt=1e-3, operator="stencil")
        traj = evolve(rough16, params, u0, [0.0, 0.05], cfg)
        oracle = dense_oracle_expm(rough16, params, u0, 0.05)
        rel = lp_norm(rough16.grid, traj[-1] - oracle, 2) / lp_norm(rough16.grid, oracle, 2)
        assert rel < 1e-4

    def test_rejects_oversize_grid(self, params):
        grid = Grid(2, 64, 8.0)
        coef = Coefficient.constant(grid, 1.0)
        with pytest.raises(ValueError):
            dense_oracle_expm(coef, params, np.zeros((2,) + grid.shape), 0.1)

    def test_dissipation_expm_norm_nonincreasing(self, rough16, params):
        u0 = random_band_field(rough16.grid, 1, 3, seed=10, ncomp=2)
        norms = [weighted_norm(rough16, dense_oracle_expm(rough16, params, u0, t)) for t in (0.0, 0.1, 0.3)]
        assert norms[0] >= norms[1] >= norms[2]
