"""Backbone sublayers: stem, downsampling, heat conduction layer, classifier head."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .autograd import Tensor, ops
from .dct import build_plan
from .hco import DEFAULT_T, FveTable, hco_forward, predict_k, uniform_coefficients
from .nn import ChannelLinear, Conv3x3, DepthwiseConv3x3, LayerNorm, Linear, Module


def drop_path(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Stochastic depth: zero whole samples of a residual branch, rescale the rest."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("drop_path in training mode needs an rng")
    keep = 1.0 - rate
    mask = (rng.random((x.shape[0],) + (1,) * (x.ndim - 1)) < keep) / keep
    return ops.mul(x, mask.astype(x.dtype))


class Stem(Module):
    """conv3x3/2 -> LN -> GELU -> conv3x3/2 -> LN."""

    def __init__(self, cin: int, C: int, rng, dtype=np.float32):
        self.conv1 = Conv3x3(cin, C, rng, stride=2, dtype=dtype)
        self.norm1 = LayerNorm(C, dtype)
        self.conv2 = Conv3x3(C, C, rng, stride=2, dtype=dtype)
        self.norm2 = LayerNorm(C, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        H, W = x.shape[2], x.shape[3]
        if H % 4 or W % 4:
            raise ValueError(f"stem: spatial extent {H}x{W} must be divisible by 4")
        x = ops.gelu(self.norm1(self.conv1(x)))
        return self.norm2(self.conv2(x))


class Downsample(Module):
    """conv3x3/2 doubling channels -> LN."""

    def __init__(self, C: int, rng, dtype=np.float32):
        self.conv = Conv3x3(C, 2 * C, rng, stride=2, dtype=dtype)
        self.norm = LayerNorm(2 * C, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        H, W = x.shape[2], x.shape[3]
        if H % 2 or W % 2:
            raise ValueError(f"downsample: spatial extent {H}x{W} must be even")
        return self.norm(self.conv(x))


class HeatLayer(Module):
    """Pre-norm heat conduction layer.

    ``y = x + out(HCO(in(DW(LN x))) * silu(gate(DW(LN x))))`` followed by
    ``z = y + FFN(LN y)``. ``out`` and the second FFN projection start at
    zero, as does the diffusivity predictor, so a fresh layer is the identity.

    ``k_mode`` is ``"fve"`` (diffusivity predicted from the stage table) or
    ``"fixed"`` (uniform ``fixed_k``, no predictor parameters).
    """

    def __init__(self, C: int, rng, drop_path: float = 0.0, mlp_ratio: int = 4,
                 k_mode: str = "fve", fixed_k: float = 0.0, t: float = DEFAULT_T,
                 dtype=np.float32):
        if not 0.0 <= drop_path < 1.0:
            raise ValueError(f"drop-path rate must lie in [0, 1), got {drop_path}")
        if k_mode not in ("fve", "fixed"):
            raise ValueError(f"unknown k_mode {k_mode!r}")
        self.C = C
        self.drop_path = drop_path
        self.k_mode = k_mode
        self.fixed_k = fixed_k
        self.t = t
        self.norm1 = LayerNorm(C, dtype)
        self.dwconv = DepthwiseConv3x3(C, rng, dtype)
        self.in_proj = ChannelLinear(C, C, rng, dtype=dtype)
        self.gate_proj = ChannelLinear(C, C, rng, dtype=dtype)
        self.out_proj = ChannelLinear(C, C, rng, zero=True, dtype=dtype)
        if k_mode == "fve":
            self.k_proj = Linear(C, C, rng, zero=True, dtype=dtype)
        self.norm2 = LayerNorm(C, dtype)
        self.fc1 = ChannelLinear(C, mlp_ratio * C, rng, dtype=dtype)
        self.fc2 = ChannelLinear(mlp_ratio * C, C, rng, zero=True, dtype=dtype)

    def coefficients(self, fve: Optional[FveTable], H: int, W: int, dtype) -> Tensor:
        if self.k_mode == "fixed":
            return Tensor(uniform_coefficients(self.fixed_k, H, W, self.t, dtype))
        if fve is None:
            raise ValueError("heat layer in fve mode needs the stage FVE table")
        return predict_k(fve, self.k_proj.weight, self.k_proj.bias, extent=(H, W), t=self.t).coeff

    def __call__(self, x: Tensor, fve: Optional[FveTable], training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        B, C, H, W = x.shape
        if C != self.C:
            raise ValueError(f"heat layer built for {self.C} channels, got input dims {x.shape}")
        h = self.dwconv(self.norm1(x))
        a = self.in_proj(h)
        gate = ops.silu(self.gate_proj(h))
        a = hco_forward(build_plan(H, W, x.dtype), self.coefficients(fve, H, W, x.dtype), a)
        branch = self.out_proj(ops.mul(a, gate))
        x = ops.add(x, drop_path(branch, self.drop_path, training, rng))
        f = self.fc2(ops.gelu(self.fc1(self.norm2(x))))
        return ops.add(x, drop_path(f, self.drop_path, training, rng))


class ClassifierHead(Module):
    """Global average pool -> LN -> linear (zero-initialised)."""

    def __init__(self, C: int, num_classes: int, rng, dtype=np.float32):
        self.norm = LayerNorm(C, dtype)
        self.fc = Linear(C, num_classes, rng, zero=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc(self.norm(ops.avg_pool_spatial(x), axis=1))


def heat_layer_forward(params: HeatLayer, fve: Optional[FveTable], x: Tensor, training: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    return params(x, fve, training, rng)


def stem_param_count(cin: int, C: int) -> int:
    return (cin * C * 9 + C) + (C * C * 9 + C) + 2 * (2 * C)


def heat_layer_param_count(C: int, mlp_ratio: int = 4, k_mode: str = "fve") -> int:
    norms = 2 * (2 * C)
    dw = 9 * C + C
    proj = 3 * (C * C + C)
    kp = (C * C + C) if k_mode == "fve" else 0
    ffn = (C * mlp_ratio * C + mlp_ratio * C) + (mlp_ratio * C * C + C)
    return norms + dw + proj + kp + ffn
