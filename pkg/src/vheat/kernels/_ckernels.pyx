# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels. Semantics match ``_reference`` exactly."""

from libc.stdint cimport uint64_t

ctypedef fused real:
    float
    double


def dwconv3x3_forward(const real[:, :, :, ::1] x, const real[:, :, ::1] w,
                      real[:, :, :, ::1] out):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t b, c, i, j, u, v, ii, jj
    cdef real acc
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(H):
                    for j in range(W):
                        acc = 0
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= H:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if jj < 0 or jj >= W:
                                    continue
                                acc = acc + w[c, u, v] * x[b, c, ii, jj]
                        out[b, c, i, j] = acc


def dwconv3x3_backward(const real[:, :, :, ::1] dout, const real[:, :, :, ::1] x,
                       const real[:, :, ::1] w, real[:, :, :, ::1] dx,
                       real[:, :, ::1] dw):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t b, c, i, j, u, v, ii, jj
    cdef real g
    with nogil:
        for c in range(C):
            for u in range(3):
                for v in range(3):
                    dw[c, u, v] = 0
        for b in range(B):
            for c in range(C):
                for i in range(H):
                    for j in range(W):
                        dx[b, c, i, j] = 0
                for i in range(H):
                    for j in range(W):
                        g = dout[b, c, i, j]
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= H:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if jj < 0 or jj >= W:
                                    continue
                                dx[b, c, ii, jj] += w[c, u, v] * g
                                dw[c, u, v] += g * x[b, c, ii, jj]


def ftcs_step(const double[:, ::1] u, double kdt, double[:, ::1] out):
    cdef Py_ssize_t H = u.shape[0], W = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, n, s, e, w_
    with nogil:
        for i in range(H):
            for j in range(W):
                c = u[i, j]
                # mirrored ghost cells: an out-of-range neighbour equals the cell itself
                n = u[i - 1, j] if i > 0 else c
                s = u[i + 1, j] if i < H - 1 else c
                w_ = u[i, j - 1] if j > 0 else c
                e = u[i, j + 1] if j < W - 1 else c
                out[i, j] = c + kdt * ((((n + s) + w_) + e) - 4.0 * c)


def fnv1a64(const unsigned char[::1] data):
    cdef uint64_t h = 14695981039346656037ULL
    cdef Py_ssize_t i, n = data.shape[0]
    with nogil:
        for i in range(n):
            h = h ^ data[i]
            h = h * 1099511628211ULL
    return h
