# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled conv kernels: shift-and-accumulate over contiguous rows.

The innermost loops run over the contiguous spatial axis so the C
compiler can vectorize them. Parallelism is over the batch axis only and
the weight-gradient reduction over the batch happens in numpy in index
order, so results are bit-deterministic regardless of thread count.
"""

import numpy as np

cimport cython
from cython.parallel import prange

ctypedef fused floating:
    float
    double


def conv2d_forward(x, w, b):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    y = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    y[...] = np.asarray(b, dtype=x.dtype)[None, :, None, None]
    if x.dtype == np.float32:
        _conv2d_forward[float](x, w, y)
    else:
        _conv2d_forward[double](x, w, y)
    return y


def conv2d_backward(x, w, gout):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    gout = np.ascontiguousarray(gout)
    gx = np.zeros_like(x)
    gw_per = np.zeros((x.shape[0],) + tuple(w.shape), dtype=w.dtype)
    if x.dtype == np.float32:
        _conv2d_backward[float](x, w, gout, gx, gw_per)
    else:
        _conv2d_backward[double](x, w, gout, gx, gw_per)
    gw = gw_per.sum(axis=0)
    gb = gout.sum(axis=(0, 2, 3))
    return gx, gw, gb


def conv1d_forward(x, w, b):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    y = np.empty((x.shape[0], w.shape[0], x.shape[2]), dtype=x.dtype)
    y[...] = np.asarray(b, dtype=x.dtype)[None, :, None]
    if x.dtype == np.float32:
        _conv1d_forward[float](x, w, y)
    else:
        _conv1d_forward[double](x, w, y)
    return y


def conv1d_backward(x, w, gout):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    gout = np.ascontiguousarray(gout)
    gx = np.zeros_like(x)
    gw_per = np.zeros((x.shape[0],) + tuple(w.shape), dtype=w.dtype)
    if x.dtype == np.float32:
        _conv1d_backward[float](x, w, gout, gx, gw_per)
    else:
        _conv1d_backward[double](x, w, gout, gx, gw_per)
    gw = gw_per.sum(axis=0)
    gb = gout.sum(axis=(0, 2))
    return gx, gw, gb


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                          floating[:, :, :, ::1] y) noexcept:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t K = w.shape[0]
    cdef Py_ssize_t n, k, c, h, i, j, ih, t, lo, hi
    cdef floating wv
    for n in prange(B, nogil=True, schedule="static"):
        for k in range(K):
            for c in range(C):
                for h in range(H):
                    for i in range(3):
                        ih = h + i - 1
                        if ih < 0 or ih >= H:
                            continue
                        for j in range(3):
                            wv = w[k, c, i, j]
                            lo = 1 - j if j < 1 else 0
                            hi = W + 1 - j if j > 1 else W
                            for t in range(lo, hi):
                                y[n, k, h, t] = y[n, k, h, t] \
                                    + wv * x[n, c, ih, t + j - 1]


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv2d_backward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                           floating[:, :, :, ::1] gout,
                           floating[:, :, :, ::1] gx,
                           floating[:, :, :, :, ::1] gw_per) noexcept:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t K = w.shape[0]
    cdef Py_ssize_t n, k, c, h, i, j, ih, t, lo, hi
    cdef floating wv, acc
    for n in prange(B, nogil=True, schedule="static"):
        for k in range(K):
            for c in range(C):
                for h in range(H):
                    for i in range(3):
                        ih = h + i - 1
                        if ih < 0 or ih >= H:
                            continue
                        for j in range(3):
                            wv = w[k, c, i, j]
                            lo = 1 - j if j < 1 else 0
                            hi = W + 1 - j if j > 1 else W
                            acc = 0
                            for t in range(lo, hi):
                                gx[n, c, ih, t + j - 1] = gx[n, c, ih, t + j - 1] \
                                    + wv * gout[n, k, h, t]
                                acc = acc + gout[n, k, h, t] * x[n, c, ih, t + j - 1]
                            gw_per[n, k, c, i, j] = gw_per[n, k, c, i, j] + acc


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv1d_forward(floating[:, :, ::1] x, floating[:, :, ::1] w,
                          floating[:, :, ::1] y) noexcept:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t K = w.shape[0]
    cdef Py_ssize_t n, k, c, j, t, lo, hi
    cdef floating wv
    for n in prange(B, nogil=True, schedule="static"):
        for k in range(K):
            for c in range(C):
                for j in range(3):
                    wv = w[k, c, j]
                    lo = 1 - j if j < 1 else 0
                    hi = T + 1 - j if j > 1 else T
                    for t in range(lo, hi):
                        y[n, k, t] = y[n, k, t] + wv * x[n, c, t + j - 1]


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv1d_backward(floating[:, :, ::1] x, floating[:, :, ::1] w,
                           floating[:, :, ::1] gout, floating[:, :, ::1] gx,
                           floating[:, :, :, ::1] gw_per) noexcept:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t K = w.shape[0]
    cdef Py_ssize_t n, k, c, j, t, lo, hi
    cdef floating wv, acc
    for n in prange(B, nogil=True, schedule="static"):
        for k in range(K):
            for c in range(C):
                for j in range(3):
                    wv = w[k, c, j]
                    lo = 1 - j if j < 1 else 0
                    hi = T + 1 - j if j > 1 else T
                    acc = 0
                    for t in range(lo, hi):
                        gx[n, c, t + j - 1] = gx[n, c, t + j - 1] \
                            + wv * gout[n, k, t]
                        acc = acc + gout[n, k, t] * x[n, c, t + j - 1]
                    gw_per[n, k, c, j] = gw_per[n, k, c, j] + acc
