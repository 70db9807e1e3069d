"""Hot kernels, compiled when available.

The compiled ``_ckernels`` extension is preferred at import; the numpy
module ``_pykernels`` is the fallback. :func:`use_backend` switches at
runtime (tests and the benchmark compare the two).
"""
import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels


def backend_name():
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {sorted(BACKENDS)}")
    previous = backend_name()
    _active = BACKENDS[name]
    return previous


def _for(arr):
    # the compiled kernels cover float32/float64 only
    return _active if arr.dtype in (np.float32, np.float64) else _pykernels


def im2col(x, kh, kw, stride, pad):
    return _for(x).im2col(np.ascontiguousarray(x), kh, kw, stride, pad)


def col2im(cols, shape, kh, kw, stride, pad):
    return _for(cols).col2im(np.ascontiguousarray(cols), tuple(shape), kh, kw, stride, pad)


def upsample_bilinear(x, out_h, out_w):
    return _for(x).upsample_bilinear(np.ascontiguousarray(x), out_h, out_w)


def upsample_bilinear_backward(g, in_h, in_w):
    return _for(g).upsample_bilinear_backward(np.ascontiguousarray(g), in_h, in_w)
