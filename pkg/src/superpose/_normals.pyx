# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Counter-addressed standard normal generator (compiled backend).

Stream position i deterministically yields the same variate for a given
64-bit key: position maps to a philox4x32-10 block (i >> 2) and lane
(i & 3); the 32-bit word becomes a uniform in (0,1) which is pushed
through the AS241 normal quantile. The float64 entry point uses the
16-digit branch of AS241; the float32 entry point uses its 7-digit
single-precision branch, whose error sits below one float32 ulp of the
result, at roughly twice the throughput. `_normals_np` is the drop-in
numpy implementation of the identical pipeline.
"""

import numpy as np
from libc.stdint cimport uint32_t, uint64_t
from libc.math cimport log, sqrt, logf, sqrtf

cdef uint32_t M0 = <uint32_t>0xD2511F53
cdef uint32_t M1 = <uint32_t>0xCD9E8D57
cdef uint32_t W0 = <uint32_t>0x9E3779B9
cdef uint32_t W1 = <uint32_t>0xBB67AE85

DEF CHUNK = 4194304  # samples per internal pass; keeps scratch in cache-ish sizes


cdef void _philox_blocks(uint64_t block0, uint64_t nblocks,
                         uint32_t k0_, uint32_t k1_,
                         uint32_t* out) noexcept nogil:
    cdef uint64_t b, ctr, p0, p1
    cdef uint32_t c0, c1, c2, c3, k0, k1, hi0, lo0, hi1, lo1, t0, t2
    cdef int r
    for b in range(nblocks):
        ctr = block0 + b
        c0 = <uint32_t>(ctr & <uint64_t>0xFFFFFFFF)
        c1 = <uint32_t>(ctr >> 32)
        c2 = 0
        c3 = 0
        k0 = k0_
        k1 = k1_
        for r in range(10):
            p0 = (<uint64_t>c0) * M0
            p1 = (<uint64_t>c2) * M1
            hi0 = <uint32_t>(p0 >> 32); lo0 = <uint32_t>p0
            hi1 = <uint32_t>(p1 >> 32); lo1 = <uint32_t>p1
            t0 = hi1 ^ c1 ^ k0
            t2 = hi0 ^ c3 ^ k1
            c0 = t0; c1 = lo1; c2 = t2; c3 = lo0
            k0 = <uint32_t>(k0 + W0)
            k1 = <uint32_t>(k1 + W1)
        out[4*b] = c0; out[4*b+1] = c1; out[4*b+2] = c2; out[4*b+3] = c3


cdef inline double _quantile_tail(double p, double q) noexcept nogil:
    # AS241 outside the central region
    cdef double r, num, den, val
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
              + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
              + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
              + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
              + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
              + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
              + 2.05319162663775882187e0) * r + 1.0)
        val = num / den
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
              + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
              + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
              + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
              + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
              + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
              + 5.99832206555887937690e-1) * r + 1.0)
        val = num / den
    if q < 0.0:
        return -val
    return val


cdef inline double _u32_to_quantile(uint32_t w) noexcept nogil:
    cdef double u = ((<double>w) + 0.5) * (1.0 / 4294967296.0)
    cdef double q = u - 0.5
    cdef double r, num, den
    if q <= 0.425 and q >= -0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
              + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
              + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
              + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
              + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
              + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
              + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    return _quantile_tail(u, q)


cdef inline float _u32_to_quantile_f32(uint32_t w) noexcept nogil:
    # Single-precision AS241. The uniform is still formed in float64 so
    # no word collapses to u == 1.0; only the quantile itself runs in
    # float arithmetic.
    cdef double u = ((<double>w) + 0.5) * (1.0 / 4294967296.0)
    cdef double q = u - 0.5
    cdef float r, num, den, val
    if q <= 0.425 and q >= -0.425:
        r = <float>(0.180625 - q * q)
        num = (((5.9109374720e1 * r + 1.5929113202e2) * r
              + 5.0434271938e1) * r + 3.3871327179e0)
        den = (((6.7187563600e1 * r + 7.8757757664e1) * r
              + 1.7895169469e1) * r + 1.0)
        return <float>q * (num / den)
    if q < 0.0:
        r = <float>u
    else:
        r = <float>(1.0 - u)
    r = sqrtf(-logf(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((1.7023821103e-1 * r + 1.3067284816e0) * r
              + 2.7568153900e0) * r + 1.4234372777e0)
        den = (1.2021132975e-1 * r + 7.3700164250e-1) * r + 1.0
    else:
        r = r - 5.0
        num = (((1.7337203997e-2 * r + 4.2868294337e-1) * r
              + 3.0812263860e0) * r + 6.6579051150e0)
        den = (1.2258202635e-2 * r + 2.4197894225e-1) * r + 1.0
    val = num / den
    if q < 0.0:
        return -val
    return val


# Central-region bounds on the raw word: |u - 0.5| <= 0.425 with
# u = (w + 0.5) / 2^32.
cdef uint32_t _W_LO = 322122547
cdef uint32_t _W_HI = 3972844748


cdef void _quantile_span_f32(const uint32_t* w, float* out,
                             Py_ssize_t n) noexcept nogil:
    """Two-pass form of the scalar routine with identical results.

    The first loop evaluates the central branch unconditionally; it is
    branch-free so the compiler can vectorize it (contraction is off, so
    lane arithmetic matches the scalar ordering). Words outside the
    central region produce harmless garbage there (the denominator
    cannot vanish on r in [-0.07, 0.19]) and the second, rarely-taken
    pass overwrites them through the full scalar path.
    """
    cdef Py_ssize_t i
    cdef double qd
    cdef float q, r, num, den
    for i in range(n):
        qd = ((<double>w[i]) + 0.5) * (1.0 / 4294967296.0) - 0.5
        q = <float>qd
        r = <float>(0.180625 - qd * qd)
        num = (((5.9109374720e1 * r + 1.5929113202e2) * r
              + 5.0434271938e1) * r + 3.3871327179e0)
        den = (((6.7187563600e1 * r + 7.8757757664e1) * r
              + 1.7895169469e1) * r + 1.0)
        out[i] = q * (num / den)
    for i in range(n):
        if w[i] < _W_LO or w[i] > _W_HI:
            out[i] = _u32_to_quantile_f32(w[i])


def fill_f32(uint64_t key, uint64_t start, float[::1] out):
    """Fill out[i] with the single-precision variate at position start+i."""
    cdef uint64_t n = <uint64_t>out.shape[0]
    cdef uint32_t k0 = <uint32_t>(key & <uint64_t>0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(key >> 32)
    scratch_arr = np.empty(CHUNK + 8, dtype=np.uint32)
    cdef uint32_t[::1] scratch = scratch_arr
    cdef uint64_t done = 0, pos, take, nblk, off, i
    while done < n:
        pos = start + done
        take = n - done
        if take > CHUNK:
            take = CHUNK
        off = pos & 3
        nblk = (off + take + 3) >> 2
        with nogil:
            _philox_blocks(pos >> 2, nblk, k0, k1, &scratch[0])
            _quantile_span_f32(&scratch[off], &out[done], <Py_ssize_t>take)
        done += take


def fill_f64(uint64_t key, uint64_t start, double[::1] out):
    """Same stream as fill_f32 before the final rounding, kept in float64."""
    cdef uint64_t n = <uint64_t>out.shape[0]
    cdef uint32_t k0 = <uint32_t>(key & <uint64_t>0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(key >> 32)
    scratch_arr = np.empty(CHUNK + 8, dtype=np.uint32)
    cdef uint32_t[::1] scratch = scratch_arr
    cdef uint64_t done = 0, pos, take, nblk, off, i
    while done < n:
        pos = start + done
        take = n - done
        if take > CHUNK:
            take = CHUNK
        off = pos & 3
        nblk = (off + take + 3) >> 2
        with nogil:
            _philox_blocks(pos >> 2, nblk, k0, k1, &scratch[0])
            for i in range(take):
                out[done + i] = _u32_to_quantile(scratch[off + i])
        done += take


def raw_words(uint64_t key, uint64_t start_block, uint64_t nblocks):
    """Philox words for nblocks consecutive counters; 4 uint32 per block."""
    out_arr = np.empty(4 * nblocks, dtype=np.uint32)
    cdef uint32_t[::1] out = out_arr
    cdef uint32_t k0 = <uint32_t>(key & <uint64_t>0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(key >> 32)
    if nblocks > 0:
        with nogil:
            _philox_blocks(start_block, nblocks, k0, k1, &out[0])
    return out_arr
