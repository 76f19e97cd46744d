"""Parameter containers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .autograd import Tensor, ops
from .hco import FveTable


def param(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Walks attributes in definition order to enumerate named parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            yield from _walk(val, prefix + name)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _walk(val, name: str):
    if isinstance(val, Tensor):
        if val.requires_grad:
            yield name, val
    elif isinstance(val, FveTable):
        yield name, val.embeddings
    elif isinstance(val, Module):
        yield from val.named_parameters(name + ".")
    elif isinstance(val, (list, tuple)):
        for i, item in enumerate(val):
            yield from _walk(item, f"{name}.{i}")


def _normal(rng, shape, std, dtype):
    return (rng.standard_normal(shape) * std).astype(dtype)


class LayerNorm(Module):
    def __init__(self, C: int, dtype=np.float32):
        self.weight = param(np.ones(C, dtype=dtype))
        self.bias = param(np.zeros(C, dtype=dtype))

    def __call__(self, x: Tensor, axis: int = 1) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, axis=axis)


class Linear(Module):
    """``x @ weight + bias`` on the trailing axis; ``weight`` is [in, out]."""

    def __init__(self, cin: int, cout: int, rng, zero: bool = False, dtype=np.float32):
        w = np.zeros((cin, cout), dtype=dtype) if zero else _normal(rng, (cin, cout), 1 / math.sqrt(cin), dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class ChannelLinear(Module):
    """Per-site linear map over the channel axis of [B, C, H, W] features.

    ``weight`` is [out, in] so the map is one batched product on [B, C, H*W].
    """

    def __init__(self, cin: int, cout: int, rng, zero: bool = False, dtype=np.float32):
        w = np.zeros((cout, cin), dtype=dtype) if zero else _normal(rng, (cout, cin), 1 / math.sqrt(cin), dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        B, C, H, W = x.shape
        y = ops.matmul(self.weight, ops.reshape(x, (B, C, H * W)))
        y = ops.add(y, ops.reshape(self.bias, (-1, 1)))
        return ops.reshape(y, (B, -1, H, W))


class Conv3x3(Module):
    def __init__(self, cin: int, cout: int, rng, stride: int = 2, dtype=np.float32):
        self.stride = stride
        self.weight = param(_normal(rng, (cout, cin, 3, 3), 1 / math.sqrt(cin * 9), dtype))
        self.bias = param(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.conv3x3(x, self.weight, stride=self.stride)
        return ops.add(y, ops.reshape(self.bias, (-1, 1, 1)))


class DepthwiseConv3x3(Module):
    def __init__(self, C: int, rng, dtype=np.float32):
        self.weight = param(_normal(rng, (C, 3, 3), 1 / 3.0, dtype))
        self.bias = param(np.zeros(C, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.dwconv3x3(x, self.weight), ops.reshape(self.bias, (-1, 1, 1)))
