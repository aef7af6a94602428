# Compiled convolution kernels: direct NHWC loops, float32.  Work is split
# over independent output slices (batch entries, or kernel taps for the
# kernel gradient), so results are bit-identical for any thread count; small
# problems skip the OpenMP region entirely.  Inner loops run on raw pointers
# with local accumulators so the compiler can vectorize them.  Geometry
# (padding offsets, output extents) is resolved by the caller so both
# backends share one definition.

from cython.parallel cimport prange
from libc.stdlib cimport free, malloc
from libc.string cimport memset
cimport openmp

# below this many multiply-accumulates a parallel region costs more than it saves
DEF PAR_THRESHOLD = 1_000_000


cdef inline int _resolve_threads(int nthreads) noexcept nogil:
    if nthreads > 0:
        return nthreads
    return openmp.omp_get_max_threads()


cdef int _fwd_one(const float[:, :, :, ::1] x, const float[:, :, :, ::1] k,
                  float[:, :, :, ::1] out, Py_ssize_t b,
                  int stride, int pt, int pl) noexcept nogil:
    cdef Py_ssize_t H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], F = k.shape[3]
    cdef Py_ssize_t Ho = out.shape[1], Wo = out.shape[2]
    cdef Py_ssize_t oh, ow, i, j, c, f, ih, iw, ih0, iw0, ilo, ihi, jlo, jhi
    cdef float v
    cdef const float* xp
    cdef const float* kp
    cdef float* acc = <float*> malloc(F * sizeof(float))
    if acc == NULL:
        return 1
    for oh in range(Ho):
        ih0 = oh * stride - pt
        ilo = -ih0 if ih0 < 0 else 0
        ihi = H - ih0 if H - ih0 < kh else kh
        for ow in range(Wo):
            iw0 = ow * stride - pl
            jlo = -iw0 if iw0 < 0 else 0
            jhi = W - iw0 if W - iw0 < kw else kw
            memset(acc, 0, F * sizeof(float))
            for i in range(ilo, ihi):
                ih = ih0 + i
                for j in range(jlo, jhi):
                    iw = iw0 + j
                    xp = &x[b, ih, iw, 0]
                    for c in range(C):
                        v = xp[c]
                        kp = &k[i, j, c, 0]
                        for f in range(F):
                            acc[f] += v * kp[f]
            for f in range(F):
                out[b, oh, ow, f] = acc[f]
    free(acc)
    return 0


def conv_fwd(const float[:, :, :, ::1] x, const float[:, :, :, ::1] k,
             float[:, :, :, ::1] out, int stride, int pt, int pl, int nthreads):
    """out[b,oh,ow,f] = sum_{i,j,c} x[b,oh*s-pt+i, ow*s-pl+j, c] * k[i,j,c,f]."""
    cdef Py_ssize_t B = x.shape[0], b
    cdef long long work = (B * out.shape[1] * out.shape[2] * k.shape[0] * k.shape[1]
                           * k.shape[2] * k.shape[3])
    cdef int T = _resolve_threads(nthreads)
    cdef int oom = 0
    if T == 1 or work < PAR_THRESHOLD:
        with nogil:
            for b in range(B):
                oom |= _fwd_one(x, k, out, b, stride, pt, pl)
    else:
        with nogil:
            for b in prange(B, num_threads=T, schedule='static'):
                oom |= _fwd_one(x, k, out, b, stride, pt, pl)
    if oom:
        raise MemoryError("conv_fwd: scratch allocation failed")


cdef int _grad_input_one(const float[:, :, :, ::1] gy, const float[:, :, :, ::1] k,
                         float[:, :, :, ::1] gx, Py_ssize_t b,
                         int stride, int pt, int pl) noexcept nogil:
    cdef Py_ssize_t H = gx.shape[1], W = gx.shape[2], C = gx.shape[3]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1], F = k.shape[3]
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    cdef Py_ssize_t oh, ow, i, j, c, f, ih, iw, ih0, iw0, ilo, ihi, jlo, jhi
    cdef float acc
    cdef const float* gyp
    cdef const float* kp
    cdef float* gxp
    for oh in range(Ho):
        ih0 = oh * stride - pt
        ilo = -ih0 if ih0 < 0 else 0
        ihi = H - ih0 if H - ih0 < kh else kh
        for ow in range(Wo):
            iw0 = ow * stride - pl
            jlo = -iw0 if iw0 < 0 else 0
            jhi = W - iw0 if W - iw0 < kw else kw
            gyp = &gy[b, oh, ow, 0]
            for i in range(ilo, ihi):
                ih = ih0 + i
                for j in range(jlo, jhi):
                    iw = iw0 + j
                    gxp = &gx[b, ih, iw, 0]
                    for c in range(C):
                        kp = &k[i, j, c, 0]
                        acc = 0.0
                        for f in range(F):
                            acc = acc + gyp[f] * kp[f]
                        gxp[c] += acc
    return 0


def conv_grad_input(const float[:, :, :, ::1] gy, const float[:, :, :, ::1] k,
                    float[:, :, :, ::1] gx, int stride, int pt, int pl, int nthreads):
    """Adjoint of conv_fwd in the input argument; `gx` must be zero-initialized."""
    cdef Py_ssize_t B = gx.shape[0], b
    cdef long long work = (B * gy.shape[1] * gy.shape[2] * k.shape[0] * k.shape[1]
                           * k.shape[2] * k.shape[3])
    cdef int T = _resolve_threads(nthreads)
    if T == 1 or work < PAR_THRESHOLD:
        with nogil:
            for b in range(B):
                _grad_input_one(gy, k, gx, b, stride, pt, pl)
    else:
        with nogil:
            for b in prange(B, num_threads=T, schedule='static'):
                _grad_input_one(gy, k, gx, b, stride, pt, pl)


cdef int _grad_kernel_tap(const float[:, :, :, ::1] x, const float[:, :, :, ::1] gy,
                          float[:, :, :, ::1] gk, Py_ssize_t u,
                          int stride, int pt, int pl) noexcept nogil:
    # One (i, j) kernel tap, accumulated in thread-local scratch to keep
    # repeated read-modify-writes out of cache lines shared between taps.
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t kw = gk.shape[1], F = gk.shape[3]
    cdef Py_ssize_t Ho = gy.shape[1], Wo = gy.shape[2]
    cdef Py_ssize_t i = u // kw, j = u % kw
    cdef Py_ssize_t b, oh, ow, c, f, ih, iw
    cdef float v
    cdef const float* xp
    cdef const float* gyp
    cdef float* lp
    cdef float* loc = <float*> malloc(C * F * sizeof(float))
    if loc == NULL:
        return 1
    memset(loc, 0, C * F * sizeof(float))
    for b in range(B):
        for oh in range(Ho):
            ih = oh * stride - pt + i
            if ih < 0 or ih >= H:
                continue
            for ow in range(Wo):
                iw = ow * stride - pl + j
                if iw < 0 or iw >= W:
                    continue
                xp = &x[b, ih, iw, 0]
                gyp = &gy[b, oh, ow, 0]
                for c in range(C):
                    v = xp[c]
                    lp = loc + c * F
                    for f in range(F):
                        lp[f] += v * gyp[f]
    for c in range(C):
        for f in range(F):
            gk[i, j, c, f] = loc[c * F + f]
    free(loc)
    return 0


def conv_grad_kernel(const float[:, :, :, ::1] x, const float[:, :, :, ::1] gy,
                     float[:, :, :, ::1] gk, int stride, int pt, int pl, int nthreads):
    """Adjoint of conv_fwd in the kernel argument; `gk` must be zero-initialized.

    Per-tap accumulation order is the sequential batch order for any thread
    count.
    """
    cdef Py_ssize_t taps = gk.shape[0] * gk.shape[1], u
    cdef long long work = (x.shape[0] * gy.shape[1] * gy.shape[2] * taps
                           * gk.shape[2] * gk.shape[3])
    cdef int T = _resolve_threads(nthreads)
    cdef int oom = 0
    if T == 1 or work < PAR_THRESHOLD:
        with nogil:
            for u in range(taps):
                oom |= _grad_kernel_tap(x, gy, gk, u, stride, pt, pl)
    else:
        with nogil:
            for u in prange(taps, num_threads=T, schedule='static'):
                oom |= _grad_kernel_tap(x, gy, gk, u, stride, pt, pl)
    if oom:
        raise MemoryError("conv_grad_kernel: scratch allocation failed")
