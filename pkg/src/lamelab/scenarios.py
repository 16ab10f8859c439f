"""Config-driven builders for experiment objects, shared by CLI and tests.

Configs are plain dicts (JSON-shaped). The standard small-data flow scenario
lives here so the command line, the test suite, and reports all run the same
bytes."""

from __future__ import annotations

import copy

import numpy as np

from .besov import BesovIndex, besov_norm_report, default_partition
from .fields import checkerboard_density, random_band_field, trig_density
from .grid import Grid
from .lagrangian import PicardConfig
from .operators import LameParams
from .varcoef import Coefficient


class ConfigError(ValueError):
    """A config dict failed schema validation."""


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing key {key!r} in {where} config")
    return cfg[key]


def build_grid(cfg: dict) -> Grid:
    try:
        return Grid(int(_require(cfg, "dim", "grid")), int(_require(cfg, "N", "grid")),
                    float(_require(cfg, "extent", "grid")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_lame(cfg: dict) -> LameParams:
    try:
        return LameParams(float(_require(cfg, "mu", "lame")), float(_require(cfg, "lambda", "lame")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_rho0(grid: Grid, cfg: dict) -> Coefficient:
    kind = _require(cfg, "kind", "rho0")
    if kind == "constant":
        return Coefficient.constant(grid, float(cfg.get("value", 1.0)))
    m = float(_require(cfg, "m", "rho0"))
    if kind == "checkerboard":
        rho = checkerboard_density(grid, m, int(cfg.get("cells", 2)), float(cfg.get("sharpness", 6.0)))
    elif kind == "trig":
        rho = trig_density(grid, m, int(cfg.get("seed", 0)), float(cfg.get("kmax", 3.0)),
                           float(cfg.get("gain", 2.0)))
    else:
        raise ConfigError(f"unknown rho0 kind {kind!r}")
    return Coefficient(grid, rho, m)


def build_u0(grid: Grid, cfg: dict, p: float = 2.0) -> np.ndarray:
    kind = _require(cfg, "kind", "u0")
    if kind == "zero":
        return np.zeros((grid.dim,) + grid.shape)
    if kind != "band":
        raise ConfigError(f"unknown u0 kind {kind!r}")
    u = random_band_field(grid, float(cfg.get("kmin", 1.0)), float(cfg.get("kmax", 3.0)),
                          int(_require(cfg, "seed", "u0")), ncomp=grid.dim)
    amplitude = float(_require(cfg, "amplitude", "u0"))
    idx = BesovIndex(grid.dim / p - 1.0, p, 1.0)
    norm = besov_norm_report(grid, u, idx, default_partition(grid)).value
    return u * (amplitude / norm)


def build_picard(cfg: dict) -> tuple:
    """Returns (T, PicardConfig) from a picard config block."""
    T = float(_require(cfg, "T", "picard"))
    pc = PicardConfig(
        dt=float(_require(cfg, "dt", "picard")),
        max_iters=int(cfg.get("max_iters", 25)),
        stop_tol_rel=float(cfg.get("tol", 1e-8)),
        smallness_c=float(cfg.get("c", 0.05)),
        flow_smallness_c0=float(cfg.get("c0", 0.1)),
        p=float(cfg.get("p", 2.0)),
    )
    return T, pc


# The standard small-data scenario: rough plateaued density at m = 1/2, a
# band-limited initial velocity at the certified amplitude, horizon equal to
# four viscous times of the lowest mode.
DEFAULT_FLOW_SCENARIO = {
    "grid": {"dim": 2, "N": 128, "extent": 8.0},
    "lame": {"mu": 1.0, "lambda": 1.0},
    # sharpness 2 keeps the full [m, 1/m] swing while the transition layer
    # stays a few cells wide at N = 128, so composition checks resolve it
    "rho0": {"kind": "checkerboard", "m": 0.5, "cells": 2, "sharpness": 2.0},
    "u0": {"kind": "band", "kmin": 1.0, "kmax": 3.0, "seed": 7, "amplitude": 0.05},
    "picard": {"T": 6.5, "dt": 0.05, "max_iters": 25, "tol": 1e-8},
}


def default_flow_scenario() -> dict:
    return copy.deepcopy(DEFAULT_FLOW_SCENARIO)
