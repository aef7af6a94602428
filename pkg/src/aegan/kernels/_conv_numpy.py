"""numpy reference implementation of the convolution kernels.

im2col/col2im with the contraction done by BLAS matmul.  Dtype-generic:
float32 in normal use, float64 when the gradient checker runs a shadow
evaluation.  This is the fallback lane when the compiled extension is
unavailable, and the reference the extension is tested against.
"""

from __future__ import annotations

import numpy as np

from . import geometry


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patch tensor (B, Ho, Wo, kh, kw, C) for 'same' padding."""
    b, h, w, c = x.shape
    ho, wo = geometry.out_extent(h, stride), geometry.out_extent(w, stride)
    pt, pb = geometry.same_pad(h, kh, stride)
    pl, pr = geometry.same_pad(w, kw, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((b, ho, wo, kh, kw, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i : i + (ho - 1) * stride + 1 : stride,
                                        j : j + (wo - 1) * stride + 1 : stride, :]
    return cols


def conv2d_forward(x: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    b, h, w, c = x.shape
    kh, kw, _, f = k.shape
    ho, wo = geometry.out_extent(h, stride), geometry.out_extent(w, stride)
    cols = _im2col(x, kh, kw, stride)
    y = cols.reshape(b * ho * wo, kh * kw * c) @ k.reshape(kh * kw * c, f)
    return y.reshape(b, ho, wo, f)


def conv2d_grad_input(gy: np.ndarray, k: np.ndarray, h: int, w: int, stride: int) -> np.ndarray:
    b, ho, wo, f = gy.shape
    kh, kw, c, _ = k.shape
    pt, pb = geometry.same_pad(h, kh, stride)
    pl, pr = geometry.same_pad(w, kw, stride)
    gcols = (gy.reshape(b * ho * wo, f) @ k.reshape(kh * kw * c, f).T)
    gcols = gcols.reshape(b, ho, wo, kh, kw, c)
    gxp = np.zeros((b, h + pt + pb, w + pl + pr, c), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + (ho - 1) * stride + 1 : stride,
                j : j + (wo - 1) * stride + 1 : stride, :] += gcols[:, :, :, i, j, :]
    return gxp[:, pt : pt + h, pl : pl + w, :]


def conv2d_grad_kernel(x: np.ndarray, gy: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    b, h, w, c = x.shape
    _, ho, wo, f = gy.shape
    cols = _im2col(x, kh, kw, stride)
    gk = cols.reshape(b * ho * wo, kh * kw * c).T @ gy.reshape(b * ho * wo, f)
    return gk.reshape(kh, kw, c, f)
