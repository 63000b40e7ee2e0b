"""Pure-numpy twin of the compiled normal-variate kernel.

Same philox4x32-10 counters, same AS241 quantile, same stream positions,
including the split where float64 output takes the 16-digit branch and
float32 takes the 7-digit single-precision branch. The u32 arithmetic is
exact in both implementations and the Horner evaluation order matches,
so outputs agree bit for bit except where libm and numpy log routines
differ by an ulp in the tail region (rare, and within one output ulp).
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF

_CHUNK = 1 << 22


def _philox_blocks(block0: int, nblocks: int, k0: int, k1: int) -> np.ndarray:
    ctr = block0 + np.arange(nblocks, dtype=np.uint64)
    c0 = (ctr & np.uint64(_MASK32)).astype(np.uint32)
    c1 = (ctr >> np.uint64(32)).astype(np.uint32)
    c2 = np.zeros(nblocks, dtype=np.uint32)
    c3 = np.zeros(nblocks, dtype=np.uint32)
    for _ in range(10):
        p0 = c0.astype(np.uint64) * _M0
        p1 = c2.astype(np.uint64) * _M1
        hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
        lo0 = p0.astype(np.uint32)
        hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
        lo1 = p1.astype(np.uint32)
        c0, c1, c2, c3 = (hi1 ^ c1 ^ np.uint32(k0), lo1,
                          hi0 ^ c3 ^ np.uint32(k1), lo0)
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    out = np.empty(4 * nblocks, dtype=np.uint32)
    out[0::4] = c0
    out[1::4] = c1
    out[2::4] = c2
    out[3::4] = c3
    return out


def _quantile(u: np.ndarray) -> np.ndarray:
    """AS241 normal quantile, vectorized, float64."""
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] * q[central]
    num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
          + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
          + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
          + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
    den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
          + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
          + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
          + 4.2313330701600911252e1) * r + 1.0)
    out[central] = q[central] * num / den

    tail = ~central
    qt = q[tail]
    pt = np.where(qt < 0.0, u[tail], 1.0 - u[tail])
    rt = np.sqrt(-np.log(pt))

    near = rt <= 5.0
    rn = rt[near] - 1.6
    num = (((((((7.74545014278341407640e-4 * rn + 2.27238449892691845833e-2) * rn
          + 2.41780725177450611770e-1) * rn + 1.27045825245236838258e0) * rn
          + 3.64784832476320460504e0) * rn + 5.76949722146069140550e0) * rn
          + 4.63033784615654529590e0) * rn + 1.42343711074968357734e0)
    den = (((((((1.05075007164441684324e-9 * rn + 5.47593808499534494600e-4) * rn
          + 1.51986665636164571966e-2) * rn + 1.48103976427480074590e-1) * rn
          + 6.89767334985100004550e-1) * rn + 1.67638483018380384940e0) * rn
          + 2.05319162663775882187e0) * rn + 1.0)
    val = np.empty_like(rt)
    val[near] = num / den

    far = ~near
    rf = rt[far] - 5.0
    num = (((((((2.01033439929228813265e-7 * rf + 2.71155556874348757815e-5) * rf
          + 1.24266094738807843860e-3) * rf + 2.65321895265761230930e-2) * rf
          + 2.96560571828504891230e-1) * rf + 1.78482653991729133580e0) * rf
          + 5.46378491116411436990e0) * rf + 6.65790464350110377720e0)
    den = (((((((2.04426310338993978564e-15 * rf + 1.42151175831644588870e-7) * rf
          + 1.84631831751005468180e-5) * rf + 7.86869131145613259100e-4) * rf
          + 1.48753612908506148525e-2) * rf + 1.36929880922735805310e-1) * rf
          + 5.99832206555887937690e-1) * rf + 1.0)
    val[far] = num / den

    out[tail] = np.where(qt < 0.0, -val, val)
    return out


def _quantile_f32(u: np.ndarray) -> np.ndarray:
    """Single-precision AS241; u stays float64 so it never rounds to 1."""
    q = u - 0.5
    out = np.empty(u.shape[0], dtype=np.float32)

    central = np.abs(q) <= 0.425
    r = (0.180625 - q[central] * q[central]).astype(np.float32)
    num = (((np.float32(5.9109374720e1) * r + np.float32(1.5929113202e2)) * r
          + np.float32(5.0434271938e1)) * r + np.float32(3.3871327179e0))
    den = (((np.float32(6.7187563600e1) * r + np.float32(7.8757757664e1)) * r
          + np.float32(1.7895169469e1)) * r + np.float32(1.0))
    out[central] = q[central].astype(np.float32) * (num / den)

    tail = ~central
    qt = q[tail]
    pt = np.where(qt < 0.0, u[tail], 1.0 - u[tail]).astype(np.float32)
    rt = np.sqrt(-np.log(pt))

    near = rt <= 5.0
    rn = rt[near] - np.float32(1.6)
    num = (((np.float32(1.7023821103e-1) * rn + np.float32(1.3067284816e0)) * rn
          + np.float32(2.7568153900e0)) * rn + np.float32(1.4234372777e0))
    den = ((np.float32(1.2021132975e-1) * rn + np.float32(7.3700164250e-1)) * rn
          + np.float32(1.0))
    val = np.empty_like(rt)
    val[near] = num / den

    far = ~near
    rf = rt[far] - np.float32(5.0)
    num = (((np.float32(1.7337203997e-2) * rf + np.float32(4.2868294337e-1)) * rf
          + np.float32(3.0812263860e0)) * rf + np.float32(6.6579051150e0))
    den = ((np.float32(1.2258202635e-2) * rf + np.float32(2.4197894225e-1)) * rf
          + np.float32(1.0))
    val[far] = num / den

    out[tail] = np.where(qt < 0.0, -val, val)
    return out


def _fill(key: int, start: int, out: np.ndarray, quantile) -> None:
    n = out.shape[0]
    k0 = key & _MASK32
    k1 = (key >> 32) & _MASK32
    done = 0
    while done < n:
        pos = start + done
        take = min(n - done, _CHUNK)
        off = pos & 3
        nblk = (off + take + 3) >> 2
        words = _philox_blocks(pos >> 2, nblk, k0, k1)
        u = (words[off:off + take].astype(np.float64) + 0.5) * (1.0 / 4294967296.0)
        out[done:done + take] = quantile(u)
        done += take


def fill_f32(key: int, start: int, out: np.ndarray) -> None:
    assert out.dtype == np.float32 and out.flags.c_contiguous
    _fill(key, start, out, _quantile_f32)


def fill_f64(key: int, start: int, out: np.ndarray) -> None:
    assert out.dtype == np.float64 and out.flags.c_contiguous
    _fill(key, start, out, _quantile)


def raw_words(key: int, start_block: int, nblocks: int) -> np.ndarray:
    return _philox_blocks(start_block, nblocks, key & _MASK32,
                          (key >> 32) & _MASK32)
