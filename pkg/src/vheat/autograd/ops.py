"""Differentiable primitives.

Each primitive computes its forward value with numpy and, when a tape is
recording, registers a vector-Jacobian product. Shapes follow numpy rules;
binary elementwise primitives broadcast and their VJPs sum the cotangent
back over broadcast axes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, expit

from .. import kernels
from .tensor import Tensor, check_finite, make_result

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: cannot broadcast dims {a.shape} and {b.shape}") from None


# --- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)

    def vjp(g):
        return (unbroadcast(g, a.shape) if a.requires_grad else None,
                unbroadcast(g, b.shape) if b.requires_grad else None)

    return make_result("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)

    def vjp(g):
        return (unbroadcast(g, a.shape) if a.requires_grad else None,
                unbroadcast(-g, b.shape) if b.requires_grad else None)

    return make_result("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)

    def vjp(g):
        return (unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return make_result("mul", a.data * b.data, (a, b), vjp)


def exp(x: Tensor) -> Tensor:
    x = _lift(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    check_finite(out, "exp")
    return make_result("exp", out, (x,), lambda g: (g * out,))


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _SQRT_HALF))
    out = xd * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return make_result("gelu", out.astype(xd.dtype, copy=False), (x,), vjp)


def silu(x: Tensor) -> Tensor:
    xd = x.data
    sig = expit(xd)
    out = xd * sig

    def vjp(g):
        return (g * (sig * (1.0 + xd * (1.0 - sig))),)

    return make_result("silu", out, (x,), vjp)


# --- shape ----------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape dims {src} to {tuple(shape)}") from None
    return make_result("reshape", out, (x,), lambda g: (g.reshape(src),))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ValueError(f"permute: axes {axes} invalid for dims {x.shape}")
    inv = tuple(np.argsort(axes))
    return make_result("permute", np.transpose(x.data, axes), (x,),
                       lambda g: (np.transpose(g, inv),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ValueError(f"broadcast: cannot broadcast dims {src} to {tuple(shape)}") from None
    return make_result("broadcast", out, (x,), lambda g: (unbroadcast(g, src),))


# --- reductions -----------------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_result("sum", np.asarray(out), (x,), vjp)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = x.shape
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.size
    else:
        ax = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([src[a] for a in ax]))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, src).copy(),)

    return make_result("mean", np.asarray(out), (x,), vjp)


def avg_pool_spatial(x: Tensor) -> Tensor:
    """Global average over the two trailing (spatial) axes: [B,C,H,W] -> [B,C]."""
    if x.ndim != 4:
        raise ValueError(f"avg_pool_spatial: expected [B,C,H,W], got dims {x.shape}")
    B, C, H, W = x.shape
    out = x.data.mean(axis=(2, 3))

    def vjp(g):
        return (np.broadcast_to((g / (H * W))[:, :, None, None], x.shape).copy(),)

    return make_result("avg_pool_spatial", out, (x,), vjp)


# --- linear algebra -------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules (both operands need ndim >= 2)."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible dims {a.shape} @ {b.shape}")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.matmul(a.data, b.data)
    except ValueError:
        raise ValueError(f"matmul: incompatible batch dims {a.shape} @ {b.shape}") from None
    check_finite(out, "matmul")

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return make_result("matmul", out, (a, b), vjp)


# --- convolution ----------------------------------------------------------

def dwconv3x3(x: Tensor, w: Tensor) -> Tensor:
    """Depthwise 3x3 convolution, stride 1, zero padding 1. ``w`` is [C,3,3]."""
    if x.ndim != 4 or w.shape != (x.shape[1], 3, 3):
        raise ValueError(f"depthwise-conv-3x3: input dims {x.shape} vs kernel dims {w.shape}")
    out = kernels.dwconv3x3(x.data, w.data)

    def vjp(g):
        dx, dw = kernels.dwconv3x3_backward(g, x.data, w.data)
        return (dx if x.requires_grad else None, dw if w.requires_grad else None)

    return make_result("dwconv3x3", out, (x, w), vjp)


def _im2col(xp: np.ndarray, Ho: int, Wo: int, stride: int) -> np.ndarray:
    taps = [xp[:, :, u:u + stride * Ho:stride, v:v + stride * Wo:stride]
            for u in range(3) for v in range(3)]
    cols = np.stack(taps, axis=-1)                  # [B, Cin, Ho, Wo, 9]
    cols = cols.transpose(0, 2, 3, 1, 4)            # [B, Ho, Wo, Cin, 9]
    B, Cin = xp.shape[0], xp.shape[1]
    return cols.reshape(B * Ho * Wo, Cin * 9)


def conv3x3(x: Tensor, w: Tensor, stride: int = 2) -> Tensor:
    """Dense 3x3 convolution with zero padding 1. ``w`` is [Cout, Cin, 3, 3]."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[1:] != (x.shape[1], 3, 3):
        raise ValueError(f"strided-conv-3x3: input dims {x.shape} vs kernel dims {w.shape}")
    B, Cin, H, W = x.shape
    Cout = w.shape[0]
    Ho = (H - 1) // stride + 1
    Wo = (W - 1) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col(xp, Ho, Wo, stride)
    wm = w.data.reshape(Cout, Cin * 9)
    out = (cols @ wm.T).reshape(B, Ho, Wo, Cout).transpose(0, 3, 1, 2)
    check_finite(out, "conv3x3")

    def vjp(g):
        gm = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, Cout)
        dw = (gm.T @ cols).reshape(w.shape) if w.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (gm @ wm).reshape(B, Ho, Wo, Cin, 9).transpose(0, 3, 1, 2, 4)
            dxp = np.zeros_like(xp)
            for k in range(9):
                u, v = divmod(k, 3)
                dxp[:, :, u:u + stride * Ho:stride, v:v + stride * Wo:stride] += dcols[..., k]
            dx = dxp[:, :, 1:H + 1, 1:W + 1]
        return dx, dw

    return make_result("conv3x3", np.ascontiguousarray(out), (x, w), vjp)


# --- normalisation and classification -------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = 1, eps: float = 1e-6) -> Tensor:
    """Normalise along ``axis`` at every other index, then scale and shift.

    ``gamma`` and ``beta`` have one entry per position along ``axis``.
    """
    axis = axis % x.ndim
    C = x.shape[axis]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"layer-norm: affine dims {gamma.shape}/{beta.shape} vs axis extent {C}")
    bshape = [1] * x.ndim
    bshape[axis] = C
    gb = gamma.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gb + beta.data.reshape(bshape)
    check_finite(out, "layer_norm")
    other = tuple(i for i in range(x.ndim) if i != axis)

    def vjp(g):
        dx = None
        if x.requires_grad:
            dxhat = g * gb
            m1 = dxhat.mean(axis=axis, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
            dx = rstd * (dxhat - m1 - xhat * m2)
        dg = (g * xhat).sum(axis=other) if gamma.requires_grad else None
        db = g.sum(axis=other) if beta.requires_grad else None
        return dx, dg, db

    return make_result("layer_norm", out, (x, gamma, beta), vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    check_finite(y, "softmax")

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", y, (x,), vjp)


def cross_entropy(logits: Tensor, labels, smoothing: float = 0.0) -> Tensor:
    """Mean cross-entropy of [B, K] logits against integer labels.

    With ``smoothing`` = eps the target is (1 - eps) one-hot + eps / K.
    """
    if logits.ndim != 2:
        raise ValueError(f"cross-entropy: expected [B, K] logits, got dims {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if labels.shape != (B,) or (labels.size and (labels.min() < 0 or labels.max() >= K)):
        raise ValueError(f"cross-entropy: labels dims {labels.shape} / range invalid for logits {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    target = np.full((B, K), smoothing / K, dtype=logits.dtype)
    target[np.arange(B), labels] += 1.0 - smoothing
    loss = -(target * logp).sum() / B
    out = np.asarray(loss, dtype=logits.dtype)
    check_finite(out, "cross_entropy")

    def vjp(g):
        return (g * (np.exp(logp) - target) / B,)

    return make_result("cross_entropy", out, (logits,), vjp)
