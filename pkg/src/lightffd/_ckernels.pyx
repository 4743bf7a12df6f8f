# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the contract."""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memcpy

cnp.import_array()


def im2col3x3(floating[:, :, ::1] x):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t c, ky, kx, y
    cdef floating *dst
    dtype = np.float32 if floating is float else np.float64
    padded_arr = np.zeros((C, H + 2, W + 2), dtype=dtype)
    padded_arr[:, 1:H + 1, 1:W + 1] = x
    out = np.empty((C * 9, H * W), dtype=dtype)
    cdef floating[:, :, ::1] padded = padded_arr
    cdef floating[:, ::1] cols = out
    with nogil:
        for c in range(C):
            for ky in range(3):
                for kx in range(3):
                    dst = &cols[c * 9 + ky * 3 + kx, 0]
                    for y in range(H):
                        memcpy(dst, &padded[c, y + ky, kx], W * sizeof(floating))
                        dst += W
    return out


def col2im3x3(floating[:, ::1] cols, Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t C = cols.shape[0] // 9
    cdef Py_ssize_t c, ky, kx, y, xx, row
    dtype = np.float32 if floating is float else np.float64
    padded_arr = np.zeros((C, H + 2, W + 2), dtype=dtype)
    cdef floating[:, :, ::1] padded = padded_arr
    with nogil:
        for c in range(C):
            for ky in range(3):
                for kx in range(3):
                    row = c * 9 + ky * 3 + kx
                    for y in range(H):
                        for xx in range(W):
                            padded[c, y + ky, xx + kx] += cols[row, y * W + xx]
    return np.ascontiguousarray(padded_arr[:, 1:H + 1, 1:W + 1])


def maxpool2x2_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    cdef Py_ssize_t n, c, y, xx, dy, dx, best_i
    cdef floating best, v
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((N, C, Ho, Wo), dtype=dtype)
    idx_arr = np.empty((N, C, Ho, Wo), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    with nogil:
        for n in range(N):
            for c in range(C):
                for y in range(Ho):
                    for xx in range(Wo):
                        best = x[n, c, 2 * y, 2 * xx]
                        best_i = 0
                        for dy in range(2):
                            for dx in range(2):
                                v = x[n, c, 2 * y + dy, 2 * xx + dx]
                                if v > best:
                                    best = v
                                    best_i = dy * 2 + dx
                        out[n, c, y, xx] = best
                        idx[n, c, y, xx] = (((n * C + c) * H + 2 * y + best_i // 2) * W
                                            + 2 * xx + best_i % 2)
    return out_arr, idx_arr


def maxpool2x2_backward(floating[:, :, :, ::1] d_out, cnp.int64_t[:, :, :, ::1] idx, in_shape):
    cdef Py_ssize_t N = d_out.shape[0], C = d_out.shape[1], Ho = d_out.shape[2], Wo = d_out.shape[3]
    cdef Py_ssize_t n, c, y, xx
    dtype = np.float32 if floating is float else np.float64
    total = 1
    for s in in_shape:
        total *= s
    dx_arr = np.zeros(total, dtype=dtype)
    cdef floating[::1] dx = dx_arr
    with nogil:
        for n in range(N):
            for c in range(C):
                for y in range(Ho):
                    for xx in range(Wo):
                        dx[idx[n, c, y, xx]] = d_out[n, c, y, xx]
    return dx_arr.reshape(tuple(in_shape))
