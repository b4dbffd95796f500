# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter and box-filter kernels.

The GEMMs of the convolution stay in BLAS (numpy); these loops replace the
strided copies and running sums that dominate the remaining time.
"""
import numpy as np
from libc.string cimport memcpy

NAME = "compiled"


def im2col(const double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = w - kw + 1
    cdef Py_ssize_t k = kh * kw * c, run = kw * c
    out = np.empty((n * ho * wo, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, i, j, di, row
    with nogil:
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    row = (b * ho + i) * wo + j
                    for di in range(kh):
                        # x[b, i+di, j:j+kw, :] is contiguous because the trailing two axes are
                        memcpy(&o[row, di * run], &x[b, i + di, j, 0], run * sizeof(double))
    return out


def col2im(const double[:, ::1] cols, Py_ssize_t n, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t c, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t ho = h - kh + 1, wo = w - kw + 1
    cdef Py_ssize_t run = kw * c
    out = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    cdef Py_ssize_t b, i, j, di, q, row
    cdef double *dst
    cdef const double *src
    with nogil:
        for b in range(n):
            for i in range(ho):
                for j in range(wo):
                    row = (b * ho + i) * wo + j
                    for di in range(kh):
                        dst = &o[b, i + di, j, 0]
                        src = &cols[row, di * run]
                        for q in range(run):
                            dst[q] += src[q]
    return out


def box_mean(const double[:, :, ::1] img, Py_ssize_t r):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    tmp = np.empty((h, w, c), dtype=np.float64)
    out = np.empty((h, w, c), dtype=np.float64)
    prefix = np.empty(max(h, w) + 1, dtype=np.float64)
    cdef double[:, :, ::1] t = tmp
    cdef double[:, :, ::1] o = out
    cdef double[::1] p = prefix
    cdef Py_ssize_t y, x, ch, lo, hi
    with nogil:
        # horizontal pass: clipped window sums divided by in-bounds count
        for y in range(h):
            for ch in range(c):
                p[0] = 0.0
                for x in range(w):
                    p[x + 1] = p[x] + img[y, x, ch]
                for x in range(w):
                    lo = x - r if x > r else 0
                    hi = x + r + 1 if x + r + 1 < w else w
                    t[y, x, ch] = (p[hi] - p[lo]) / (hi - lo)
        # vertical pass
        for x in range(w):
            for ch in range(c):
                p[0] = 0.0
                for y in range(h):
                    p[y + 1] = p[y] + t[y, x, ch]
                for y in range(h):
                    lo = y - r if y > r else 0
                    hi = y + r + 1 if y + r + 1 < h else h
                    o[y, x, ch] = (p[hi] - p[lo]) / (hi - lo)
    return out
