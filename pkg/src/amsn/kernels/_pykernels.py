"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the compiled path is tested against.
"""
import numpy as np


def im2col(x, kh, kw, stride, pad):
    b, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        i_end = i + stride * ho
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i_end:stride, j:j + stride * wo:stride]
    return cols.reshape(b, c * kh * kw, ho * wo)


def col2im(cols, shape, kh, kw, stride, pad):
    b, c, h, w = shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    cols = cols.reshape(b, c, kh, kw, ho, wo)
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        i_end = i + stride * ho
        for j in range(kw):
            out[:, :, i:i_end:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


def _interp_matrix(n_in, n_out, dtype):
    """Dense [n_out, n_in] matrix of align-corners=false bilinear weights."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for o in range(n_out):
        src = max((o + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(src), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    return m.astype(dtype)


def upsample_bilinear(x, out_h, out_w):
    ah = _interp_matrix(x.shape[2], out_h, x.dtype)
    aw = _interp_matrix(x.shape[3], out_w, x.dtype)
    return np.ascontiguousarray(np.matmul(np.matmul(ah, x), aw.T))


def upsample_bilinear_backward(g, in_h, in_w):
    ah = _interp_matrix(in_h, g.shape[2], g.dtype)
    aw = _interp_matrix(in_w, g.shape[3], g.dtype)
    return np.ascontiguousarray(np.matmul(np.matmul(ah.T, g), aw))
