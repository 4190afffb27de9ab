# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the low-level 2-D kernels.

Must stay operation-for-operation identical to ``pykern``: same tap
accumulation order, same nested-lerp bilinear form, same one-final-division
area reduction.  The parity test suite compares the two lanes directly.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def sep_convolve(double[:, ::1] a, double[::1] k):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], taps = k.shape[0]
    cdef Py_ssize_t r = (taps - 1) // 2
    cdef Py_ssize_t i, j, t
    cdef double s

    tmp_arr = np.zeros((h, w), dtype=np.float64)
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(h):
            for j in range(w):
                s = 0.0
                for t in range(taps):
                    s += k[t] * a[i, _clamp(j + t - r, 0, w - 1)]
                tmp[i, j] = s
        for i in range(h):
            for j in range(w):
                s = 0.0
                for t in range(taps):
                    s += k[t] * tmp[_clamp(i + t - r, 0, h - 1), j]
                out[i, j] = s
    return out_arr


def minmax_filter(double[:, ::1] a, Py_ssize_t radius, bint use_max):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t i, j, dr, dc
    cdef double best, v

    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(h):
            for j in range(w):
                best = a[i, j]
                for dr in range(-radius, radius + 1):
                    for dc in range(-radius, radius + 1):
                        v = a[_clamp(i + dr, 0, h - 1), _clamp(j + dc, 0, w - 1)]
                        if use_max:
                            if v > best:
                                best = v
                        else:
                            if v < best:
                                best = v
                out[i, j] = best
    return out_arr


def resize_bilinear(double[:, ::1] a, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef double scale_y = h / <double> oh
    cdef double scale_x = w / <double> ow
    cdef Py_ssize_t i, j, y0, x0, y1, x1
    cdef double sy, sx, fy, fx, tl, tr, bl, br, top, bot

    out_arr = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    with nogil:
        for i in range(oh):
            sy = (i + 0.5) * scale_y - 0.5
            if sy < 0.0:
                sy = 0.0
            if sy > h - 1.0:
                sy = h - 1.0
            y0 = <Py_ssize_t> sy
            fy = sy - y0
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            for j in range(ow):
                sx = (j + 0.5) * scale_x - 0.5
                if sx < 0.0:
                    sx = 0.0
                if sx > w - 1.0:
                    sx = w - 1.0
                x0 = <Py_ssize_t> sx
                fx = sx - x0
                x1 = x0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                tl = a[y0, x0]
                tr = a[y0, x1]
                bl = a[y1, x0]
                br = a[y1, x1]
                top = tl + fx * (tr - tl)
                bot = bl + fx * (br - bl)
                out[i, j] = top + fy * (bot - top)
    return out_arr


cdef void _area_axis0(double[:, ::1] a, double[:, ::1] out) nogil:
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], oh = out.shape[0]
    cdef Py_ssize_t i, j, r, r0, r1
    cdef double lo, hi, wgt

    for i in range(oh):
        for j in range(w):
            out[i, j] = 0.0
    for i in range(oh):
        lo = (i * h) / <double> oh
        hi = ((i + 1) * h) / <double> oh
        r0 = <Py_ssize_t> lo
        r1 = h
        if <Py_ssize_t> hi + 1 < r1:
            r1 = <Py_ssize_t> hi + 1
        for r in range(r0, r1):
            wgt = (hi if hi < r + 1.0 else r + 1.0) - (lo if lo > r else <double> r)
            if wgt > 0.0:
                for j in range(w):
                    out[i, j] += wgt * a[r, j]


def resize_area(double[:, ::1] a, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t i, j

    acc_arr = np.zeros((oh, w), dtype=np.float64)
    acct_arr = np.zeros((w, oh), dtype=np.float64)
    out_t_arr = np.zeros((ow, oh), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef double[:, ::1] acct = acct_arr
    cdef double[:, ::1] out_t = out_t_arr

    _area_axis0(a, acc)
    with nogil:
        for i in range(oh):
            for j in range(w):
                acct[j, i] = acc[i, j]
    _area_axis0(acct, out_t)

    cdef double denom = ((h / <double> oh) * (w / <double> ow))
    out_arr = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(oh):
            for j in range(ow):
                out[i, j] = out_t[j, i] / denom
    return out_arr
