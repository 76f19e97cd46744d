"""Heat conduction operator.

``U_t = IDCT(DCT(U_0) * exp(-k * omega^2 * t))`` per channel, with the
diffusivity ``k`` predicted from a learnable frequency-value embedding table
through a linear map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .autograd import Tensor, ops
from .dct import DctPlan, dct2d, idct2d

DEFAULT_T = 1.0
DEFAULT_CANONICAL = (64, 64)


@dataclass(frozen=True)
class FrequencyGrid:
    M: int
    N: int
    omega2: np.ndarray  # [M, N], (pi p / M)^2 + (pi q / N)^2


@lru_cache(maxsize=None)
def frequency_grid(M: int, N: int) -> FrequencyGrid:
    if M < 1 or N < 1:
        raise ValueError(f"frequency grid needs positive extents, got {M}x{N}")
    wx = (math.pi * np.arange(M) / M) ** 2
    wy = (math.pi * np.arange(N) / N) ** 2
    omega2 = wx[:, None] + wy[None, :]
    omega2.flags.writeable = False
    return FrequencyGrid(M, N, omega2)


class FveTable:
    """Learnable [M, N, D] frequency value embeddings shared by one stage."""

    def __init__(self, embeddings: Tensor, stage: int = 0):
        if embeddings.ndim != 3:
            raise ValueError(f"FVE table must be [M, N, D], got dims {embeddings.shape}")
        self.embeddings = embeddings
        self.stage = stage

    @classmethod
    def init(cls, M: int, N: int, D: int, rng: np.random.Generator, stage: int = 0,
             std: float = 0.02, dtype=np.float32) -> "FveTable":
        emb = rng.normal(0.0, std, size=(M, N, D)).astype(dtype)
        return cls(Tensor(emb, requires_grad=True, name=f"fve{stage}"), stage)

    @property
    def extent(self) -> tuple[int, int]:
        return self.embeddings.shape[0], self.embeddings.shape[1]

    @property
    def width(self) -> int:
        return self.embeddings.shape[2]


@dataclass
class ThermalField:
    k: Tensor      # [M, N, C]
    t: float
    coeff: Tensor  # [M, N, C], exp(-k omega^2 t)


def decay_coefficients(k, grid: FrequencyGrid, t: float = DEFAULT_T) -> Tensor:
    """``exp(-k * omega^2 * t)``; ``k`` is [M, N] or [M, N, C]."""
    k = k if isinstance(k, Tensor) else Tensor(k)
    if tuple(k.shape[:2]) != (grid.M, grid.N):
        raise ValueError(f"decay_coefficients: k dims {k.shape} vs grid {grid.M}x{grid.N}")
    if not np.isfinite(k.data).all():
        raise ValueError("decay_coefficients: thermal diffusivity contains non-finite values")
    w = -grid.omega2 * t
    if k.ndim == 3:
        w = w[:, :, None]
    return ops.exp(ops.mul(k, w.astype(k.dtype)))


def predict_k(fve: FveTable, W: Tensor, b: Tensor, extent: Optional[tuple[int, int]] = None,
              t: float = DEFAULT_T) -> ThermalField:
    """Linear map from the embeddings to a per-frequency, per-channel diffusivity."""
    M, N = fve.extent
    if extent is not None and tuple(extent) != (M, N):
        raise ValueError(
            f"FVE extent {M}x{N} does not match feature extent {extent[0]}x{extent[1]}; "
            "call resize_fve first")
    if W.shape[0] != fve.width or b.shape != (W.shape[1],):
        raise ValueError(f"predict_k: weight dims {W.shape} / bias {b.shape} vs FVE width {fve.width}")
    k = ops.add(ops.matmul(fve.embeddings, W), b)
    return ThermalField(k, t, decay_coefficients(k, frequency_grid(M, N), t))


def hco_forward(plan: DctPlan, coeff, U0) -> Tensor:
    """Conduct ``U0`` [B, C, M, N] through one frequency-domain decay step.

    ``coeff`` is [M, N, C] (per channel) or [M, N] (shared by all channels).
    """
    U0 = U0 if isinstance(U0, Tensor) else Tensor(U0)
    coeff = coeff if isinstance(coeff, Tensor) else Tensor(np.asarray(coeff, dtype=U0.dtype))
    if U0.ndim != 4 or tuple(U0.shape[2:]) != (plan.M, plan.N):
        raise ValueError(f"hco_forward: input dims {U0.shape} vs plan {plan.M}x{plan.N}")
    if tuple(coeff.shape[:2]) != (plan.M, plan.N):
        raise ValueError(f"hco_forward: coefficient dims {coeff.shape} vs plan {plan.M}x{plan.N}")
    if coeff.ndim == 3:
        if coeff.shape[2] != U0.shape[1]:
            raise ValueError(f"hco_forward: coefficient channels {coeff.shape[2]} vs input {U0.shape[1]}")
        coeff = ops.permute(coeff, (2, 0, 1))
    spec = dct2d(plan, U0)
    return idct2d(plan, ops.mul(spec, coeff))


def hco_array(plan: DctPlan, coeff: np.ndarray, U0: np.ndarray) -> np.ndarray:
    """Tape-free fast path; ``coeff`` is [C, M, N] or [M, N]."""
    X = np.matmul(np.matmul(plan.C, U0), plan.D.T)
    X *= coeff
    return np.matmul(np.matmul(plan.C.T, X), plan.D)


def uniform_coefficients(k: float, M: int, N: int, t: float = DEFAULT_T, dtype=np.float64) -> np.ndarray:
    return np.exp(-k * frequency_grid(M, N).omega2 * t).astype(dtype)


def _bilinear_matrix(src: int, dst: int) -> np.ndarray:
    """[dst, src] linear interpolation weights, half-pixel centres, edge clamped."""
    R = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        x = (i + 0.5) * scale - 0.5
        x = min(max(x, 0.0), src - 1)
        lo = int(math.floor(x))
        hi = min(lo + 1, src - 1)
        frac = x - lo
        R[i, lo] += 1.0 - frac
        R[i, hi] += frac
    return R


def resize_fve(fve: FveTable, M: int, N: int, canonical: Optional[tuple[int, int]] = DEFAULT_CANONICAL) -> FveTable:
    """Align an FVE table to a new feature extent.

    The table is zero-padded at the high-frequency (lower-right) end up to the
    ``canonical`` extent (never cropped), then bilinearly resampled to
    ``(M, N)``. Requesting the current extent returns an exact copy.
    """
    if M < 1 or N < 1:
        raise ValueError(f"resize_fve: target extent must be positive, got {M}x{N}")
    src = fve.embeddings.data
    M0, N0, D = src.shape
    if (M, N) == (M0, N0):
        return FveTable(Tensor(src.copy(), requires_grad=fve.embeddings.requires_grad,
                               name=fve.embeddings.name), fve.stage)
    cM, cN = canonical if canonical is not None else (M0, N0)
    cM, cN = max(cM, M0), max(cN, N0)
    padded = np.zeros((cM, cN, D), dtype=np.float64)
    padded[:M0, :N0] = src
    Rm = _bilinear_matrix(cM, M)
    Rn = _bilinear_matrix(cN, N)
    out = np.einsum("ip,pqd,jq->ijd", Rm, padded, Rn).astype(src.dtype)
    return FveTable(Tensor(out, requires_grad=fve.embeddings.requires_grad, name=fve.embeddings.name),
                    fve.stage)
