"""Hot stencil kernels with a compiled core and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when the environment variable ``VHEAT_PURE_PYTHON`` is set to a non-empty
value, the numpy implementations in ``_reference`` are selected at import.
``BACKEND`` names the active choice.
"""

import os
from types import ModuleType

import numpy as np

from . import _reference

try:
    if os.environ.get("VHEAT_PURE_PYTHON"):
        raise ImportError("pure-python mode requested")
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

_active: ModuleType = _compiled if _compiled is not None else _reference
BACKEND = "cython" if _compiled is not None else "numpy"


def available_backends() -> list[str]:
    return ["numpy"] + (["cython"] if _compiled is not None else [])


def _impl(backend):
    if backend is None:
        return _active
    if backend == "numpy":
        return _reference
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; reinstall with Cython available")
        return _compiled
    raise ValueError(f"unknown kernel backend {backend!r}")


def _as_pair(x, w):
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return x, np.ascontiguousarray(w, dtype=x.dtype)


def dwconv3x3(x, w, backend=None):
    """Depthwise 3x3 convolution, stride 1, zero padding 1.

    ``x`` is [B, C, H, W], ``w`` is [C, 3, 3].
    """
    x, w = _as_pair(x, w)
    if x.ndim != 4 or w.shape != (x.shape[1], 3, 3):
        raise ValueError(f"dwconv3x3: input dims {x.shape} incompatible with kernel dims {w.shape}")
    out = np.empty_like(x)
    _impl(backend).dwconv3x3_forward(x, w, out)
    return out


def dwconv3x3_backward(dout, x, w, backend=None):
    x, w = _as_pair(x, w)
    dout = np.ascontiguousarray(dout, dtype=x.dtype)
    dx = np.empty_like(x)
    dw = np.empty_like(w)
    _impl(backend).dwconv3x3_backward(dout, x, w, dx, dw)
    return dx, dw


def ftcs_step(u, kdt, backend=None):
    """One explicit heat step ``u + kdt * L(u)`` with mirrored (Neumann) ghost cells."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty_like(u)
    _impl(backend).ftcs_step(u, float(kdt), out)
    return out


def fnv1a64(data, backend=None) -> int:
    buf = np.frombuffer(data, dtype=np.uint8)
    return int(_impl(backend).fnv1a64(buf))
