"""Convolution kernels: naive-loop oracle, backend agreement, geometry."""

import numpy as np
import pytest

from aegan import kernels
from aegan.kernels import _conv_numpy, geometry


def naive_conv2d(x, k, stride):
    """Direct nested-loop cross-correlation with 'same' padding (the oracle)."""
    b, h, w, c = x.shape
    kh, kw, _, f = k.shape
    ho, wo = geometry.out_extent(h, stride), geometry.out_extent(w, stride)
    pt = geometry.same_pad(h, kh, stride)[0]
    pl = geometry.same_pad(w, kw, stride)[0]
    out = np.zeros((b, ho, wo, f), dtype=x.dtype)
    for bi in range(b):
        for oh in range(ho):
            for ow in range(wo):
                for i in range(kh):
                    ih = oh * stride - pt + i
                    if not 0 <= ih < h:
                        continue
                    for j in range(kw):
                        iw = ow * stride - pl + j
                        if not 0 <= iw < w:
                            continue
                        for ci in range(c):
                            for fi in range(f):
                                out[bi, oh, ow, fi] += x[bi, ih, iw, ci] * k[i, j, ci, fi]
    return out


def integer_valued(np_rng, shape, lo=-8, hi=8):
    """Random floats whose products and small sums are exact in float32."""
    return np_rng.integers(lo, hi + 1, size=shape).astype(np.float32)


def test_conv_matches_naive_loop_exactly(np_rng):
    # integer-valued inputs make every summation order exact, so both
    # backends must equal the oracle bit for bit
    x = integer_valued(np_rng, (1, 6, 6, 1))
    k = integer_valued(np_rng, (5, 5, 1, 2))
    expect = naive_conv2d(x, k, 2)
    assert np.array_equal(kernels.conv2d_forward(x, k, 2), expect)
    assert np.array_equal(_conv_numpy.conv2d_forward(x, k, 2), expect)


def test_conv_matches_naive_loop_multichannel(np_rng):
    x = integer_valued(np_rng, (2, 7, 5, 3), -4, 4)
    k = integer_valued(np_rng, (5, 5, 3, 4), -4, 4)
    expect = naive_conv2d(x, k, 2)
    assert np.array_equal(kernels.conv2d_forward(x, k, 2), expect)


def test_zero_input_zero_output():
    x = np.zeros((1, 8, 8, 3), np.float32)
    k = np.ones((5, 5, 3, 4), np.float32)
    assert not kernels.conv2d_forward(x, k, 2).any()


def test_output_shape_halves():
    x = np.zeros((1, 64, 64, 3), np.float32)
    k = np.zeros((5, 5, 3, 7), np.float32)
    assert kernels.conv2d_forward(x, k, 2).shape == (1, 32, 32, 7)


@pytest.mark.parametrize("shape,kshape", [
    ((2, 6, 6, 3), (5, 5, 3, 4)),
    ((1, 4, 4, 2), (5, 5, 2, 3)),
    ((3, 16, 16, 8), (5, 5, 8, 16)),
    ((2, 5, 7, 3), (3, 3, 3, 4)),
    ((1, 1, 1, 32), (5, 5, 32, 16)),
    ((64, 8, 8, 16), (5, 5, 16, 32)),
])
def test_backends_agree(np_rng, shape, kshape):
    if not kernels.HAVE_EXT:
        pytest.skip("compiled extension not built")
    x = np_rng.standard_normal(shape).astype(np.float32)
    k = np_rng.standard_normal(kshape).astype(np.float32)
    h, w = shape[1], shape[2]
    y_c = kernels.conv2d_forward(x, k, 2)
    y_n = _conv_numpy.conv2d_forward(x, k, 2)
    np.testing.assert_allclose(y_c, y_n, rtol=1e-5, atol=1e-5)
    gy = np_rng.standard_normal(y_c.shape).astype(np.float32)
    np.testing.assert_allclose(kernels.conv2d_grad_input(gy, k, h, w, 2),
                               _conv_numpy.conv2d_grad_input(gy, k, h, w, 2),
                               rtol=1e-5, atol=1e-5)
    np.testing.assert_allclose(kernels.conv2d_grad_kernel(x, gy, kshape[0], kshape[1], 2),
                               _conv_numpy.conv2d_grad_kernel(x, gy, kshape[0], kshape[1], 2),
                               rtol=1e-4, atol=1e-4)


def test_results_independent_of_thread_count(np_rng):
    if not kernels.HAVE_EXT:
        pytest.skip("compiled extension not built")
    x = np_rng.standard_normal((16, 8, 8, 8)).astype(np.float32)
    k = np_rng.standard_normal((5, 5, 8, 16)).astype(np.float32)
    gy = np_rng.standard_normal((16, 4, 4, 16)).astype(np.float32)
    before = kernels.get_num_threads()
    try:
        results = []
        for nt in (1, 2, 4):
            kernels.set_num_threads(nt)
            results.append((kernels.conv2d_forward(x, k, 2),
                            kernels.conv2d_grad_input(gy, k, 8, 8, 2),
                            kernels.conv2d_grad_kernel(x, gy, 5, 5, 2)))
        for other in results[1:]:
            for a, b in zip(results[0], other):
                assert np.array_equal(a, b)  # bit-identical by construction
    finally:
        kernels.set_num_threads(before)


def test_same_pad_geometry():
    # stride-2 'same' with a 5-tap kernel: 1 before, 2 after at even extents
    assert geometry.same_pad(64, 5, 2) == (1, 2)
    assert geometry.same_pad(1, 5, 2) == (2, 2)
    assert geometry.out_extent(5, 2) == 3
    assert geometry.out_extent(64, 2) == 32


def test_float64_goes_through_numpy_lane(np_rng):
    x = np_rng.standard_normal((2, 6, 6, 3))
    k = np_rng.standard_normal((5, 5, 3, 4))
    y = kernels.conv2d_forward(x, k, 2)
    assert y.dtype == np.float64
    np.testing.assert_allclose(y, naive_conv2d(x, k, 2), rtol=1e-12)
