"""Explicit finite-difference heat solver used as an independent oracle.

Unit grid spacing, 5-point Laplacian, mirrored ghost cells (zero normal flux).
Only uniform diffusivity is supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dct import build_plan, idct2d_array
from .hco import hco_array, uniform_coefficients


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class HeatGrid:
    u: np.ndarray
    k: float
    dt: float

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"diffusivity must be non-negative, got {self.k}")
        if self.k * self.dt > 0.25:
            raise StabilityError(
                f"explicit step unstable: k*dt = {self.k * self.dt:g} exceeds 1/4 (dt <= {0.25 / self.k:g})")


def ftcs_step(g: HeatGrid) -> HeatGrid:
    return HeatGrid(kernels.ftcs_step(g.u, g.k * g.dt), g.k, g.dt)


def ftcs_solve(u0, k: float, t: float, dt: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"conduction time must be non-negative, got {t}")
    steps = int(round(t / dt))
    if abs(steps * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"t={t} is not an integral number of steps of dt={dt}")
    g = HeatGrid(np.array(u0, dtype=np.float64), k, dt)
    u = g.u
    kdt = k * dt
    for _ in range(steps):
        u = kernels.ftcs_step(u, kdt)
    return u


def band_limited_field(M: int, N: int, cutoff: int, rng: np.random.Generator) -> np.ndarray:
    """Random field whose DCT support is confined to p, q <= cutoff."""
    coeffs = np.zeros((M, N))
    coeffs[:cutoff + 1, :cutoff + 1] = rng.uniform(-1.0, 1.0, size=(min(cutoff + 1, M), min(cutoff + 1, N)))
    return idct2d_array(build_plan(M, N), coeffs)


def compare_hco_ftcs(u0, k: float, t: float) -> float:
    """Relative L2 gap between spectral conduction and the finite-difference solve."""
    u0 = np.asarray(u0, dtype=np.float64)
    M, N = u0.shape
    dt = min(0.01, 1.0 / (8.0 * k)) if k > 0 else 0.01
    if t > 0:
        dt = t / math.ceil(t / dt - 1e-9)  # shrink so t is a whole number of steps
    spectral = hco_array(build_plan(M, N), uniform_coefficients(k, M, N, t), u0)
    physical = ftcs_solve(u0, k, t, dt)
    return float(np.linalg.norm(spectral - physical) / np.linalg.norm(u0))
