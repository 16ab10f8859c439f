"""Constant-coefficient operators and their exact semigroups.

The elastic operator mu*Lap + (lambda+mu)*grad(div) diagonalizes per
frequency over the Hodge split: on curl-free modes it acts as nu*Lap with
nu = lambda + 2*mu, on divergence-free modes as mu*Lap. Everything here is
an exact per-frequency multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import Grid, _check_field, fftn, ifftn


@dataclass(frozen=True)
class LameParams:
    """Viscosity pair (mu, lam); ellipticity requires mu > 0 and nu = lam + 2*mu > 0."""

    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not (self.nu > 0):
            raise ValueError(f"nu = lam + 2*mu must be positive, got {self.nu}")

    @property
    def nu(self) -> float:
        return self.lam + 2.0 * self.mu


@dataclass(frozen=True)
class ScaledLaplacian:
    """Generator c*Laplacian acting componentwise on any field."""

    c: float = 1.0

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError(f"diffusivity must be positive, got {self.c}")


Generator = Union[ScaledLaplacian, LameParams]


def _check_vector(grid: Grid, u: np.ndarray) -> np.ndarray:
    u = _check_field(grid, u)
    if u.ndim != grid.dim + 1 or u.shape[0] != grid.dim:
        raise ValueError(f"expected vector field (dim, *shape), got {u.shape}")
    return u


def _hodge_split_hat(grid: Grid, u_hat: np.ndarray):
    """Split spectral vector data into (curl-free part, divergence-free part).

    The zero mode goes entirely to the divergence-free part: the gradient
    projector annihilates constants.
    """
    xi = grid.freq
    xi2 = grid.freq_sq.copy()
    xi2[xi2 == 0.0] = np.inf  # sends the zero mode's Q-part to zero
    dot = np.einsum("a...,a...->...", xi, u_hat)
    q_hat = xi * (dot / xi2)
    p_hat = u_hat - q_hat
    return p_hat, q_hat


def hodge_project(grid: Grid, u: np.ndarray, which: str) -> np.ndarray:
    """Apply the divergence-free ('P') or gradient ('Q') projector to a vector field."""
    u = _check_vector(grid, u)
    p_hat, q_hat = _hodge_split_hat(grid, fftn(grid, u))
    if which == "P":
        return ifftn(grid, p_hat)
    if which == "Q":
        return ifftn(grid, q_hat)
    raise ValueError(f"which must be 'P' or 'Q', got {which!r}")


def hodge_symbols(grid: Grid):
    """Per-frequency projector matrices (P_hat, Q_hat), each (dim, dim, *shape).

    Q_hat(xi) = xi xi^T / |xi|^2 with Q_hat(0) = 0; P_hat = I - Q_hat.
    """
    xi = grid.freq
    xi2 = grid.freq_sq.copy()
    xi2[xi2 == 0.0] = np.inf
    q = np.einsum("a...,b...->ab...", xi, xi) / xi2
    eye = np.zeros_like(q)
    for a in range(grid.dim):
        eye[a, a] = 1.0
    return eye - q, q


def lame_apply(grid: Grid, u: np.ndarray, params: LameParams) -> np.ndarray:
    """Spectral application of mu*Lap + (lam+mu)*grad(div) to a vector field."""
    u = _check_vector(grid, u)
    u_hat = fftn(grid, u)
    xi = grid.freq
    dot = np.einsum("a...,a...->...", xi, u_hat)
    out_hat = -params.mu * grid.freq_sq * u_hat - (params.lam + params.mu) * xi * dot
    return ifftn(grid, out_hat)


def apply_generator(grid: Grid, u: np.ndarray, gen: Generator) -> np.ndarray:
    """Apply a constant-coefficient generator (c*Lap or the elastic operator)."""
    if isinstance(gen, ScaledLaplacian):
        u = _check_field(grid, u)
        return ifftn(grid, -gen.c * grid.freq_sq * fftn(grid, u))
    return lame_apply(grid, u, gen)


def _spectral_parts(grid: Grid, u: np.ndarray, gen: Generator):
    """Decompose u into spectral parts on which gen acts as a scalar -c|xi|^2."""
    if isinstance(gen, ScaledLaplacian):
        u = _check_field(grid, u)
        return [(gen.c, fftn(grid, u))]
    u = _check_vector(grid, u)
    p_hat, q_hat = _hodge_split_hat(grid, fftn(grid, u))
    return [(gen.mu, p_hat), (gen.nu, q_hat)]


def const_semigroup(grid: Grid, u: np.ndarray, t: float, gen: Generator) -> np.ndarray:
    """Heat flow of the generator at time t >= 0 (exact per-frequency decay)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    xi2 = grid.freq_sq
    out_hat = sum(np.exp(-c * t * xi2) * part for c, part in _spectral_parts(grid, u, gen))
    return ifftn(grid, out_hat)


def semigroup_weighted(grid: Grid, u: np.ndarray, t: float, gen: Generator, k: int) -> np.ndarray:
    """(t*G)^k e^{t*G} u for the heat flow of G; k = 0 reduces to the semigroup."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    xi2 = grid.freq_sq
    out_hat = sum(
        (-c * t * xi2) ** k * np.exp(-c * t * xi2) * part
        for c, part in _spectral_parts(grid, u, gen)
    )
    return ifftn(grid, out_hat)
