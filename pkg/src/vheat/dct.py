"""Orthonormal 2D DCT-II / DCT-III as two matrix products.

For an M x N slice ``A`` the forward transform is ``C @ A @ D.T`` and the
inverse is ``C.T @ B @ D``, where row ``p`` of ``C`` holds the sampled
cosine ``alpha_p * cos((2m + 1) p pi / 2M)``. With ``alpha_0 = sqrt(1/M)``
and ``alpha_p = sqrt(2/M)`` otherwise, ``C`` is orthogonal, so the inverse
is just the transpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autograd import Tensor, ops


def dct_matrix(M: int, dtype=np.float64) -> np.ndarray:
    """M x M orthonormal DCT-II matrix with frequency along rows."""
    if M < 1:
        raise ValueError(f"DCT size must be positive, got {M}")
    m = np.arange(M, dtype=np.float64)
    p = m[:, None]
    mat = np.cos((2.0 * m[None, :] + 1.0) * p * math.pi / (2.0 * M))
    mat *= math.sqrt(2.0 / M)
    mat[0] = math.sqrt(1.0 / M)
    return mat.astype(dtype)


@dataclass(frozen=True)
class DctPlan:
    M: int
    N: int
    C: np.ndarray
    D: np.ndarray

    @property
    def dtype(self):
        return self.C.dtype


@lru_cache(maxsize=None)
def _cached_plan(M: int, N: int, dtype_name: str) -> DctPlan:
    dtype = np.dtype(dtype_name)
    C = dct_matrix(M, dtype)
    D = C if N == M else dct_matrix(N, dtype)
    C.flags.writeable = False
    D.flags.writeable = False
    return DctPlan(M, N, C, D)


def build_plan(M: int, N: int, dtype=np.float64) -> DctPlan:
    """Return the (cached, read-only) plan for M x N slices."""
    if M < 1 or N < 1:
        raise ValueError(f"DCT plan needs positive extents, got {M}x{N}")
    return _cached_plan(int(M), int(N), np.dtype(dtype).name)


def _check(plan: DctPlan, shape, what: str) -> None:
    if len(shape) < 2 or tuple(shape[-2:]) != (plan.M, plan.N):
        raise ValueError(f"{what}: input dims {tuple(shape)} do not match plan {plan.M}x{plan.N}")


def dct2d_array(plan: DctPlan, A: np.ndarray) -> np.ndarray:
    _check(plan, A.shape, "dct2d")
    return np.matmul(np.matmul(plan.C, A), plan.D.T)


def idct2d_array(plan: DctPlan, B: np.ndarray) -> np.ndarray:
    _check(plan, B.shape, "idct2d")
    return np.matmul(np.matmul(plan.C.T, B), plan.D)


def _plan_tensors(plan: DctPlan, dtype):
    C = plan.C if plan.C.dtype == dtype else plan.C.astype(dtype)
    D = plan.D if plan.D.dtype == dtype else plan.D.astype(dtype)
    return Tensor(C), Tensor(D)


def dct2d(plan: DctPlan, A) -> Tensor:
    """Forward transform over the two trailing axes, recorded on the tape."""
    A = A if isinstance(A, Tensor) else Tensor(A)
    _check(plan, A.shape, "dct2d")
    C, D = _plan_tensors(plan, A.dtype)
    return ops.matmul(ops.matmul(C, A), Tensor(D.data.T))


def idct2d(plan: DctPlan, B) -> Tensor:
    B = B if isinstance(B, Tensor) else Tensor(B)
    _check(plan, B.shape, "idct2d")
    C, D = _plan_tensors(plan, B.dtype)
    return ops.matmul(ops.matmul(Tensor(C.data.T), B), D)


def dct2d_naive(A: np.ndarray) -> np.ndarray:
    """Direct double summation of the DCT-II definition. O(M^2 N^2); tests only."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"dct2d_naive takes a single 2D slice, got dims {A.shape}")
    M, N = A.shape
    out = np.empty((M, N))
    m = np.arange(M)
    n = np.arange(N)
    for p in range(M):
        ap = math.sqrt((1.0 if p == 0 else 2.0) / M)
        cm = np.cos((2 * m + 1) * p * math.pi / (2 * M))
        for q in range(N):
            aq = math.sqrt((1.0 if q == 0 else 2.0) / N)
            cn = np.cos((2 * n + 1) * q * math.pi / (2 * N))
            total = 0.0
            for i in range(M):
                for j in range(N):
                    total += A[i, j] * cm[i] * cn[j]
            out[p, q] = ap * aq * total
    return out
