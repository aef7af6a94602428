"""Convolution kernels with backend selection at import.

The compiled Cython extension handles the float32 hot path when it built
successfully; the numpy im2col implementation is the fallback and the only
lane for float64 (used by the gradient checker's shadow evaluations).
Set ``AEGAN_KERNELS=numpy`` to force the fallback, ``compiled`` to require
the extension.  ``benchmarks/bench_kernels.py`` compares the two lanes.
"""

from __future__ import annotations

import os

import numpy as np

from . import _conv_numpy, geometry
from .geometry import out_extent, same_pad

# sleeping OpenMP workers between kernel calls keeps them from starving the
# numpy work interleaved with compiled kernels on small machines
os.environ.setdefault("OMP_WAIT_POLICY", "PASSIVE")

try:
    from . import _conv_cy as _ext
except ImportError:
    _ext = None

HAVE_EXT = _ext is not None

_mode = os.environ.get("AEGAN_KERNELS", "auto")
if _mode not in ("auto", "compiled", "numpy"):
    raise ValueError(f"AEGAN_KERNELS must be auto|compiled|numpy, got {_mode!r}")
if _mode == "compiled" and not HAVE_EXT:
    raise ImportError("AEGAN_KERNELS=compiled but the extension is not built")

def _affinity_count() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


_num_threads = _affinity_count()


def set_num_threads(n: int) -> None:
    """Cap OpenMP parallelism of the compiled kernels; 0 = all available cores."""
    global _num_threads
    _num_threads = int(n) if n > 0 else _affinity_count()


def get_num_threads() -> int:
    return _num_threads


def active_backend() -> str:
    """Backend used for float32 work: 'compiled' or 'numpy'."""
    return "compiled" if (HAVE_EXT and _mode != "numpy") else "numpy"


def _compiled_ok(*arrays: np.ndarray) -> bool:
    if active_backend() != "compiled":
        return False
    return all(a.dtype == np.float32 and a.flags.c_contiguous for a in arrays)


def conv2d_forward(x: np.ndarray, k: np.ndarray, stride: int = 2) -> np.ndarray:
    """Cross-correlation, 'same' padding: (B,H,W,C) x (kh,kw,C,F) -> (B,ceil(H/s),ceil(W/s),F)."""
    b, h, w, c = x.shape
    kh, kw, kc, f = k.shape
    assert kc == c, (k.shape, x.shape)
    if _compiled_ok(x, k):
        out = np.zeros((b, out_extent(h, stride), out_extent(w, stride), f), np.float32)
        _ext.conv_fwd(x, k, out, stride, same_pad(h, kh, stride)[0],
                      same_pad(w, kw, stride)[0], _num_threads)
        return out
    return _conv_numpy.conv2d_forward(x, k, stride)


def conv2d_grad_input(gy: np.ndarray, k: np.ndarray, h: int, w: int, stride: int = 2) -> np.ndarray:
    """Adjoint of conv2d_forward w.r.t. its input; also the transposed-conv forward."""
    b = gy.shape[0]
    kh, kw, c, f = k.shape
    assert gy.shape[3] == f and gy.shape[1] == out_extent(h, stride) \
        and gy.shape[2] == out_extent(w, stride), (gy.shape, k.shape, h, w)
    if _compiled_ok(gy, k):
        gx = np.zeros((b, h, w, c), np.float32)
        _ext.conv_grad_input(gy, k, gx, stride, same_pad(h, kh, stride)[0],
                             same_pad(w, kw, stride)[0], _num_threads)
        return gx
    return _conv_numpy.conv2d_grad_input(gy, k, h, w, stride)


def conv2d_grad_kernel(x: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int = 2) -> np.ndarray:
    """Adjoint of conv2d_forward w.r.t. the kernel: returns (kh,kw,C,F)."""
    b, h, w, c = x.shape
    f = gy.shape[3]
    assert gy.shape[:3] == (b, out_extent(h, stride), out_extent(w, stride)), (x.shape, gy.shape)
    if _compiled_ok(x, gy):
        gk = np.zeros((kh, kw, c, f), np.float32)
        _ext.conv_grad_kernel(x, gy, gk, stride, same_pad(h, kh, stride)[0],
                              same_pad(w, kw, stride)[0], _num_threads)
        return gk
    return _conv_numpy.conv2d_grad_kernel(x, gy, kh, kw, stride)
