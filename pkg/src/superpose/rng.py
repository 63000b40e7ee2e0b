"""Counter-addressed normal variates with reproducible stream addressing.

Every random quantity in the system is drawn from a keyed counter stream:
a 64-bit key selects the stream and a 64-bit position selects the sample.
Regenerating any slice of any stream is therefore exact, which is what
lets a dictionary column be rebuilt on demand instead of stored.

Two interchangeable backends provide the generator: a compiled extension
and a pure numpy implementation. The compiled one is preferred when the
build produced it; `BACKEND` records which is active.
"""

import hashlib

import numpy as np

try:
    from . import _normals as _impl
    BACKEND = "compiled"
except ImportError:
    from . import _normals_np as _impl
    BACKEND = "pure"

_KEY_MASK = (1 << 64) - 1


def derive_key(master: int, *tags) -> int:
    """Hash a master seed and a tag tuple down to a 64-bit stream key.

    Tags may be ints or short strings. Distinct tag tuples give
    independent streams for all practical purposes.
    """
    h = hashlib.sha256()
    h.update(int(master).to_bytes(8, "little", signed=False))
    for t in tags:
        if isinstance(t, str):
            b = t.encode()
            h.update(b"s" + len(b).to_bytes(2, "little") + b)
        else:
            h.update(b"i" + int(t).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest()[:8], "little")


def normal_fill(key: int, start: int, out: np.ndarray) -> np.ndarray:
    """Fill `out` with standard normals from positions start..start+len-1."""
    key = int(key) & _KEY_MASK
    if out.dtype == np.float32:
        _impl.fill_f32(key, start, out.ravel())
    elif out.dtype == np.float64:
        _impl.fill_f64(key, start, out.ravel())
    else:
        raise TypeError(f"unsupported dtype {out.dtype}")
    return out


def normals(key: int, start: int, n: int, dtype=np.float64) -> np.ndarray:
    out = np.empty(n, dtype=dtype)
    return normal_fill(key, start, out)


def raw_words(key: int, start_block: int, nblocks: int) -> np.ndarray:
    """Raw 32-bit generator words, mainly for backend-equivalence tests."""
    return _impl.raw_words(int(key) & _KEY_MASK, start_block, nblocks)
