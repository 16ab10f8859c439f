"""Deterministic test-field and rough-density generators.

Band-limited random fields are built from an explicit integer-mode list with
a seed-keyed draw per mode, so the same (seed, band) reproduces the same
continuum function on any resolution. That makes refinement studies compare
one function on two grids instead of two unrelated draws.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, lp_norm, mean_free


def gaussian_bump(grid: Grid, sigma: float, center=None, amplitude: float = 1.0) -> np.ndarray:
    """Periodized Gaussian exp(-|x-c|^2 / (2 sigma^2)) via minimum-image distance."""
    if center is None:
        center = (0.0,) * grid.dim
    delta = grid.coords - np.asarray(center).reshape((grid.dim,) + (1,) * grid.dim)
    d2 = np.sum(grid.min_image(delta) ** 2, axis=0)
    return amplitude * np.exp(-0.5 * d2 / sigma**2)


def plane_wave(grid: Grid, kvec, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    """cos(2 pi k.x / L + phase) for an integer mode vector k."""
    kvec = np.asarray(kvec, dtype=float)
    arg = 2.0 * np.pi / grid.extent * np.einsum("a,a...->...", kvec, grid.coords)
    return amplitude * np.cos(arg + phase)


def _mode_list(dim: int, kmin: float, kmax: float):
    """Half-lattice of integer modes with kmin <= |k| <= kmax, fixed order."""
    kint = int(np.ceil(kmax))
    axes = [range(-kint, kint + 1)] * dim
    modes = []
    for k in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim):
        norm = float(np.sqrt(np.sum(k.astype(float) ** 2)))
        if not (kmin <= norm <= kmax):
            continue
        # keep one of each +-k pair: first nonzero entry positive
        lead = next((c for c in k if c != 0), 0)
        if lead > 0:
            modes.append(tuple(int(c) for c in k))
    return sorted(modes)


def random_band_field(
    grid: Grid,
    kmin: float,
    kmax: float,
    seed: int,
    ncomp: int | None = None,
    normalize: str | None = "besov_ready",
) -> np.ndarray:
    """Random real trigonometric polynomial supported on kmin <= |k| <= kmax.

    ncomp = None gives a scalar field, otherwise shape (ncomp, *grid.shape).
    ``normalize='besov_ready'`` rescales to unit max-norm (mean is zero by
    construction since |k| >= kmin > 0 excludes the DC mode).
    """
    if kmin <= 0:
        raise ValueError("kmin must be positive so the field is mean-free")
    if 2 * kmax >= grid.n:
        raise ValueError(f"band |k| <= {kmax} not representable at n = {grid.n}")
    rng = np.random.default_rng(seed)
    modes = _mode_list(grid.dim, kmin, kmax)
    if not modes:
        raise ValueError(f"no integer modes with {kmin} <= |k| <= {kmax}")
    comps = 1 if ncomp is None else ncomp
    out = np.zeros((comps,) + grid.shape)
    two_pi_over_L = 2.0 * np.pi / grid.extent
    for k in modes:
        arg = two_pi_over_L * np.einsum("a,a...->...", np.asarray(k, dtype=float), grid.coords)
        ca, sa = np.cos(arg), np.sin(arg)
        for c in range(comps):
            a, b = rng.normal(size=2)
            out[c] += a * ca + b * sa
    if normalize == "besov_ready":
        peak = np.max(np.abs(out))
        if peak > 0:
            out = out / peak
    if ncomp is None:
        return out[0]
    return out


def delta_field(grid: Grid, index) -> np.ndarray:
    """Discrete delta at a node, scaled so its Riemann sum is one."""
    out = np.zeros(grid.shape)
    out[tuple(index)] = 1.0 / grid.cell_volume
    return out


def checkerboard_density(grid: Grid, m: float, cells: int = 2, sharpness: float = 6.0) -> np.ndarray:
    """Smoothed checkerboard with values in [m, 1/m] (plateaus at the bounds)."""
    if not (0 < m <= 1):
        raise ValueError(f"m must be in (0, 1], got {m}")
    g = np.ones(grid.shape)
    for a in range(grid.dim):
        s = np.sin(2.0 * np.pi * cells * grid.coords[a] / grid.extent)
        g = g * np.tanh(sharpness * s) / np.tanh(sharpness)
    return m ** (-g)


def trig_density(grid: Grid, m: float, seed: int = 0, kmax: float = 3.0, gain: float = 2.0) -> np.ndarray:
    """Thresholded random trigonometric polynomial mapped into [m, 1/m].

    The gain > 1 clips the profile hard at both bounds, producing the rough
    plateaued coefficients the variable-density runs exercise.
    """
    if not (0 < m <= 1):
        raise ValueError(f"m must be in (0, 1], got {m}")
    t = random_band_field(grid, 1.0, kmax, seed)
    t = t / np.max(np.abs(t))
    g = np.clip(gain * t, -1.0, 1.0)
    return m ** (-g)


def normalized_besov_amplitude(grid: Grid, u: np.ndarray, norm_value: float, target: float) -> np.ndarray:
    """Rescale u so a previously computed norm hits the target value."""
    if norm_value <= 0:
        raise ValueError("cannot normalize a zero field")
    return u * (target / norm_value)


def random_time_profile(t_grid: np.ndarray, seed: int) -> np.ndarray:
    """Smooth positive-ish envelope over a time grid for forcing probes."""
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=3)
    tau = t_grid / max(t_grid[-1], 1e-30)
    return a * np.cos(np.pi * tau) + b * np.sin(2.0 * np.pi * tau) + 0.5 * c


__all__ = [
    "gaussian_bump",
    "plane_wave",
    "random_band_field",
    "delta_field",
    "checkerboard_density",
    "trig_density",
    "normalized_besov_amplitude",
    "random_time_profile",
    "mean_free",
    "lp_norm",
]
