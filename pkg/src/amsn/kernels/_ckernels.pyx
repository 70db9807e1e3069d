# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im and bilinear interpolation kernels.

Loops are serial on purpose: summation order is fixed, so results are
bitwise reproducible run to run.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((b, c * kh * kw, ho * wo), dtype=dtype)
    cdef real[:, :, ::1] cols = out
    cdef Py_ssize_t n, ch, i, j, oy, ox, row, iy, ix
    for n in range(b):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * stride + j - pad
                            if 0 <= ix < w:
                                cols[n, row, oy * wo + ox] = x[n, ch, iy, ix]
    return out


def col2im(real[:, :, ::1] cols, tuple shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t b = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((b, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] x = out
    cdef Py_ssize_t n, ch, i, j, oy, ox, row, iy, ix
    for n in range(b):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * stride + j - pad
                            if 0 <= ix < w:
                                x[n, ch, iy, ix] += cols[n, row, oy * wo + ox]
    return out


cdef void _axis_table(Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t[::1] lo,
                      Py_ssize_t[::1] hi, double[::1] lam):
    cdef double scale = <double>n_in / <double>n_out
    cdef double src
    cdef Py_ssize_t o, i0
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        if src < 0:
            src = 0
        i0 = <Py_ssize_t>floor(src)
        if i0 > n_in - 1:
            i0 = n_in - 1
        lo[o] = i0
        hi[o] = i0 + 1 if i0 + 1 < n_in else n_in - 1
        lam[o] = src - i0


def upsample_bilinear(real[:, :, :, ::1] x, int out_h, int out_w):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    y0 = np.empty(out_h, dtype=np.intp); y1 = np.empty(out_h, dtype=np.intp)
    x0 = np.empty(out_w, dtype=np.intp); x1 = np.empty(out_w, dtype=np.intp)
    ly = np.empty(out_h, dtype=np.float64); lx = np.empty(out_w, dtype=np.float64)
    _axis_table(h, out_h, y0, y1, ly)
    _axis_table(w, out_w, x0, x1, lx)
    cdef Py_ssize_t[::1] ty0 = y0, ty1 = y1, tx0 = x0, tx1 = x1
    cdef double[::1] tly = ly, tlx = lx
    dtype = np.float32 if real is float else np.float64
    out = np.empty((b, c, out_h, out_w), dtype=dtype)
    rows_buf = np.empty((h, out_w), dtype=np.float64)
    cdef real[:, :, :, ::1] o = out
    cdef double[:, ::1] rows = rows_buf
    cdef Py_ssize_t n, ch, iy, oy, ox, r0, r1
    cdef double a, d
    for n in range(b):
        for ch in range(c):
            # horizontal pass over every input row, then blend row pairs
            for iy in range(h):
                for ox in range(out_w):
                    d = tlx[ox]
                    rows[iy, ox] = (1 - d) * x[n, ch, iy, tx0[ox]] + d * x[n, ch, iy, tx1[ox]]
            for oy in range(out_h):
                a = tly[oy]
                r0 = ty0[oy]
                r1 = ty1[oy]
                for ox in range(out_w):
                    o[n, ch, oy, ox] = <real>((1 - a) * rows[r0, ox] + a * rows[r1, ox])
    return out


def upsample_bilinear_backward(real[:, :, :, ::1] g, int in_h, int in_w):
    cdef Py_ssize_t b = g.shape[0], c = g.shape[1], out_h = g.shape[2], out_w = g.shape[3]
    y0 = np.empty(out_h, dtype=np.intp); y1 = np.empty(out_h, dtype=np.intp)
    x0 = np.empty(out_w, dtype=np.intp); x1 = np.empty(out_w, dtype=np.intp)
    ly = np.empty(out_h, dtype=np.float64); lx = np.empty(out_w, dtype=np.float64)
    _axis_table(in_h, out_h, y0, y1, ly)
    _axis_table(in_w, out_w, x0, x1, lx)
    cdef Py_ssize_t[::1] ty0 = y0, ty1 = y1, tx0 = x0, tx1 = x1
    cdef double[::1] tly = ly, tlx = lx
    acc = np.zeros((b, c, in_h, in_w), dtype=np.float64)
    rows_buf = np.empty((in_h, out_w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = acc
    cdef double[:, ::1] rows = rows_buf
    cdef Py_ssize_t n, ch, iy, oy, ox, r0, r1
    cdef double a, d, v
    for n in range(b):
        for ch in range(c):
            # transpose of the forward: scatter to row pairs, then along each row
            rows[:, :] = 0.0
            for oy in range(out_h):
                a = tly[oy]
                r0 = ty0[oy]
                r1 = ty1[oy]
                for ox in range(out_w):
                    v = g[n, ch, oy, ox]
                    rows[r0, ox] += (1 - a) * v
                    rows[r1, ox] += a * v
            for iy in range(in_h):
                for ox in range(out_w):
                    d = tlx[ox]
                    v = rows[iy, ox]
                    gx[n, ch, iy, tx0[ox]] += (1 - d) * v
                    gx[n, ch, iy, tx1[ox]] += d * v
    return acc.astype(np.float32 if real is float else np.float64, copy=False)
