# cython: boundscheck=False, wraparound=False, nonecheck=False, cdivision=True
"""Compiled data-movement kernels; semantics match pyref bit for bit."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double

NAME = "cython"


def im2col3x3(real[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ci, k, di, dj, i, j, si, sj
    out_np = np.empty((c * 9, h * w), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_np
    for ci in range(c):
        for k in range(9):
            di = k // 3 - 1
            dj = k % 3 - 1
            for i in range(h):
                si = i + di
                if si < 0 or si >= h:
                    for j in range(w):
                        out[ci * 9 + k, i * w + j] = 0
                    continue
                for j in range(w):
                    sj = j + dj
                    if sj < 0 or sj >= w:
                        out[ci * 9 + k, i * w + j] = 0
                    else:
                        out[ci * 9 + k, i * w + j] = x[ci, si, sj]
    return out_np


def col2im3x3(real[:, ::1] cols, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t c = cols.shape[0] // 9
    cdef Py_ssize_t ci, k, di, dj, i, j, si, sj
    out_np = np.zeros((c, h, w), dtype=np.asarray(cols).dtype)
    cdef real[:, :, ::1] out = out_np
    for ci in range(c):
        for k in range(9):
            di = k // 3 - 1
            dj = k % 3 - 1
            for i in range(h):
                si = i + di
                if si < 0 or si >= h:
                    continue
                for j in range(w):
                    sj = j + dj
                    if 0 <= sj < w:
                        out[ci, si, sj] += cols[ci * 9 + k, i * w + j]
    return out_np


def maxpool2x2(real[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t hh = h // 2, ww = w // 2
    cdef Py_ssize_t ci, i, j, k, best_k
    cdef real v, best
    pooled_np = np.empty((c, hh, ww), dtype=np.asarray(x).dtype)
    idx_np = np.empty((c, hh, ww), dtype=np.uint8)
    cdef real[:, :, ::1] pooled = pooled_np
    cdef unsigned char[:, :, ::1] idx = idx_np
    for ci in range(c):
        for i in range(hh):
            for j in range(ww):
                best = x[ci, 2 * i, 2 * j]
                best_k = 0
                for k in range(1, 4):
                    v = x[ci, 2 * i + k // 2, 2 * j + k % 2]
                    if v > best:
                        best = v
                        best_k = k
                pooled[ci, i, j] = best
                idx[ci, i, j] = <unsigned char> best_k
    return pooled_np, idx_np


def maxpool2x2_scatter(real[:, :, ::1] dy, unsigned char[:, :, ::1] idx,
                       Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t c = dy.shape[0], hh = dy.shape[1], ww = dy.shape[2]
    cdef Py_ssize_t ci, i, j, k
    out_np = np.zeros((c, h, w), dtype=np.asarray(dy).dtype)
    cdef real[:, :, ::1] out = out_np
    for ci in range(c):
        for i in range(hh):
            for j in range(ww):
                k = idx[ci, i, j]
                out[ci, 2 * i + k // 2, 2 * j + k % 2] = dy[ci, i, j]
    return out_np
