"""Pure numpy / pure Python implementations of the compiled kernels.

Used when the extension is not built, or when ``VHEAT_PURE_PYTHON`` is set.
"""

import numpy as np

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def dwconv3x3_forward(x, w, out):
    H, W = x.shape[2], x.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out[...] = 0
    for u in range(3):
        for v in range(3):
            out += w[None, :, u, v, None, None] * xp[:, :, u:u + H, v:v + W]


def dwconv3x3_backward(dout, x, w, dx, dw):
    H, W = x.shape[2], x.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    gp = np.pad(dout, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dx[...] = 0
    for u in range(3):
        for v in range(3):
            dx += w[None, :, u, v, None, None] * gp[:, :, 2 - u:2 - u + H, 2 - v:2 - v + W]
            dw[:, u, v] = np.einsum("bchw,bchw->c", dout, xp[:, :, u:u + H, v:v + W])


def ftcs_step(u, kdt, out):
    p = np.pad(u, 1, mode="edge")
    n = p[:-2, 1:-1]
    s = p[2:, 1:-1]
    w = p[1:-1, :-2]
    e = p[1:-1, 2:]
    out[...] = u + kdt * ((((n + s) + w) + e) - 4.0 * u)


def fnv1a64(data):
    h = FNV_OFFSET
    for byte in bytes(data):
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h
