"""Periodic isotropic grids and the spectral toolbox built on them.

A field is a plain ndarray whose trailing ``dim`` axes are the spatial
axes (row-major over x1, x2, ...); any leading axes are components.
Scalar fields have shape ``grid.shape``, vector fields ``(dim, *shape)``,
matrix fields ``(dim, dim, *shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus [-L/2, L/2)^dim.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    n : int
        Points per axis; a power of two, at least 8.
    extent : float
        Torus side length L; all axes share n and L.
    """

    dim: int
    n: int
    extent: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")
        if not (self.extent > 0):
            raise ValueError(f"extent must be positive, got {self.extent}")

    @property
    def spacing(self) -> float:
        return self.extent / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def spatial_axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (dim, *shape), axes in [-L/2, L/2)."""
        x1 = -0.5 * self.extent + self.spacing * np.arange(self.n)
        return np.stack(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    @cached_property
    def freq(self) -> np.ndarray:
        """Angular frequencies xi = 2*pi*k/L per axis, shape (dim, *shape)."""
        xi1 = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        return np.stack(np.meshgrid(*([xi1] * self.dim), indexing="ij"))

    @cached_property
    def freq_sq(self) -> np.ndarray:
        """|xi|^2, shape ``shape``."""
        return np.sum(self.freq**2, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True away from every Nyquist plane (k = -n/2 has no conjugate partner)."""
        xi1 = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        ny = np.abs(np.abs(xi1) - np.pi / self.spacing) > 1e-12 * np.pi / self.spacing
        masks = np.meshgrid(*([ny] * self.dim), indexing="ij")
        out = masks[0]
        for m in masks[1:]:
            out = out & m
        return out

    def min_image(self, delta: np.ndarray) -> np.ndarray:
        """Wrap coordinate differences into [-L/2, L/2)."""
        L = self.extent
        return (delta + 0.5 * L) % L - 0.5 * L


def grid_new(dim: int, points_per_axis: int, extent: float) -> Grid:
    """Validated grid constructor; spacing = extent / points_per_axis."""
    return Grid(dim, points_per_axis, extent)


def _check_field(grid: Grid, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    if u.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {u.shape} does not end in grid shape {grid.shape}")
    return u


def fftn(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Forward DFT over the spatial axes (components untouched)."""
    return scipy.fft.fftn(_check_field(grid, u), axes=grid.spatial_axes)


def ifftn(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """Inverse DFT over the spatial axes, real part (physical fields are real)."""
    return scipy.fft.ifftn(u_hat, axes=grid.spatial_axes).real


def dft_roundtrip(grid: Grid, u: np.ndarray) -> np.ndarray:
    """ifft(fft(u)); equals u to near machine precision for finite input."""
    u = _check_field(grid, u)
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite samples")
    return ifftn(grid, fftn(grid, u))


def spectral_derivative(grid: Grid, u: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Exact derivative of the trigonometric interpolant along one axis.

    Multiplies the coefficient of mode k by (i*xi_axis)^order. Odd orders
    zero the Nyquist planes, which carry no sign information for real data.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if not 0 <= axis < grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {grid.dim}")
    u_hat = fftn(grid, u)
    xi = grid.freq[axis]
    u_hat = u_hat * (1j * xi) ** order
    if order % 2 == 1:
        u_hat = u_hat * grid.nyquist_mask
    return ifftn(grid, u_hat)


def gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Spectral gradient of a scalar field, shape (dim, *shape)."""
    return np.stack([spectral_derivative(grid, u, a) for a in range(grid.dim)])


def jacobian(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Spectral Jacobian of a vector field: out[i, j] = d v_i / d x_j."""
    v = _check_field(grid, v)
    if v.shape[0] != grid.dim or v.ndim != grid.dim + 1:
        raise ValueError(f"expected vector field (dim, *shape), got {v.shape}")
    return np.stack([gradient(grid, v[i]) for i in range(grid.dim)])


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Spectral divergence of a vector field."""
    v = _check_field(grid, v)
    return sum(spectral_derivative(grid, v[a], a) for a in range(grid.dim))


def matrix_divergence(grid: Grid, m: np.ndarray) -> np.ndarray:
    """Row-wise spectral divergence of a matrix field: out[i] = sum_j d m[i, j] / d x_j."""
    m = _check_field(grid, m)
    return np.stack([divergence(grid, m[i]) for i in range(grid.dim)])


def field_magnitude(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean magnitude over all component axes."""
    u = _check_field(grid, u)
    comp_axes = tuple(range(u.ndim - grid.dim))
    if not comp_axes:
        return np.abs(u)
    return np.sqrt(np.sum(u**2, axis=comp_axes))


def lp_norm(grid: Grid, u: np.ndarray, p: float) -> float:
    """Riemann-sum L^p norm, (h^n sum |u|^p)^(1/p); p = inf is the node max.

    Components are collapsed to the pointwise Euclidean magnitude first.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = field_magnitude(grid, u)
    if np.isinf(p):
        return float(np.max(mag))
    return float((grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def mean_value(grid: Grid, u: np.ndarray) -> np.ndarray:
    return np.mean(_check_field(grid, u), axis=grid.spatial_axes)


def mean_free(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Recenter each component to zero mean (torus stand-in for decaying data)."""
    u = _check_field(grid, u)
    return u - np.mean(u, axis=grid.spatial_axes, keepdims=True)


def integral(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Riemann-sum integral over the torus, componentwise."""
    u = _check_field(grid, u)
    return grid.cell_volume * np.sum(u, axis=grid.spatial_axes)


def translate(grid: Grid, u: np.ndarray, steps) -> np.ndarray:
    """Shift a field by whole grid steps along each axis (periodic)."""
    u = _check_field(grid, u)
    return np.roll(u, shift=tuple(steps), axis=grid.spatial_axes)
