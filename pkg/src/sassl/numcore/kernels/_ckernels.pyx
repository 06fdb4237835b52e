# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_reference``.

Signatures and results match the numpy fallback; only speed differs.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport floor, fmod

cnp.import_array()


def _im2col(const floating[:, :, :, ::1] x, floating[:, ::1] cols,
            int kh, int kw, int stride, int pad, int ho, int wo):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, oy, ox, ch, ky, kx, iy, ix, row, col
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for ky in range(kh):
                            iy = oy * stride + ky - pad
                            for kx in range(kw):
                                ix = ox * stride + kx - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    cols[row, col] = x[b, ch, iy, ix]
                                else:
                                    cols[row, col] = 0
                                col = col + 1


def _col2im(const floating[:, ::1] cols, floating[:, :, :, ::1] out,
            int kh, int kw, int stride, int pad, int ho, int wo):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t b, oy, ox, ch, ky, kx, iy, ix, row, col
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for ky in range(kh):
                            iy = oy * stride + ky - pad
                            for kx in range(kw):
                                ix = ox * stride + kx - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[b, ch, iy, ix] += cols[row, col]
                                col = col + 1


def im2col(x, int kh, int kw, int stride, int pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n * ho * wo, c * kh * kw), dtype=x.dtype)
    _im2col(x, cols, kh, kw, stride, pad, ho, wo)
    return cols


def col2im(cols, shape, int kh, int kw, int stride, int pad):
    cols = np.ascontiguousarray(cols)
    n, c, h, w = shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    _col2im(cols, out, kh, kw, stride, pad, ho, wo)
    return out


def _hue_shift(const floating[:, :, ::1] img, floating[:, :, ::1] out, double delta):
    cdef Py_ssize_t h = img.shape[1], w = img.shape[2], y, x
    cdef double r, g, b, maxc, minc, span, hue, s, v, f, p, q, t, rc, gc, bc
    cdef int i
    with nogil:
        for y in range(h):
            for x in range(w):
                # double accumulation; agrees with the numpy path to input rounding
                r = img[0, y, x]
                g = img[1, y, x]
                b = img[2, y, x]
                maxc = max(max(r, g), b)
                minc = min(min(r, g), b)
                v = maxc
                span = maxc - minc
                s = span / maxc if maxc > 0 else 0.0
                if span > 0:
                    rc = (maxc - r) / span
                    gc = (maxc - g) / span
                    bc = (maxc - b) / span
                    if r == maxc:
                        hue = bc - gc
                    elif g == maxc:
                        hue = 2.0 + rc - bc
                    else:
                        hue = 4.0 + gc - rc
                    hue = fmod(hue / 6.0, 1.0)
                    if hue < 0:
                        hue = hue + 1.0
                else:
                    hue = 0.0
                hue = fmod(hue + delta, 1.0)
                if hue < 0:
                    hue = hue + 1.0
                f = hue * 6.0
                i = <int>floor(f)
                f = f - i
                i = i % 6
                p = v * (1.0 - s)
                q = v * (1.0 - s * f)
                t = v * (1.0 - s * (1.0 - f))
                if i == 0:
                    out[0, y, x] = v; out[1, y, x] = t; out[2, y, x] = p
                elif i == 1:
                    out[0, y, x] = q; out[1, y, x] = v; out[2, y, x] = p
                elif i == 2:
                    out[0, y, x] = p; out[1, y, x] = v; out[2, y, x] = t
                elif i == 3:
                    out[0, y, x] = p; out[1, y, x] = q; out[2, y, x] = v
                elif i == 4:
                    out[0, y, x] = t; out[1, y, x] = p; out[2, y, x] = v
                else:
                    out[0, y, x] = v; out[1, y, x] = p; out[2, y, x] = q


def hue_shift(img, double delta):
    img = np.ascontiguousarray(img)
    out = np.empty_like(img)
    _hue_shift(img, out, delta)
    return out
