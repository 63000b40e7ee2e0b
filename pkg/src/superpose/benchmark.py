"""Throughput comparison of the variate-generation backends.

Run as `python3 -m superpose.benchmark`. Times the compiled extension
against the pure numpy backend on the same keyed streams, checks they
agree, and reports numpy's own Philox ziggurat as an external yardstick.
Dictionary generation dominates large-scale simulation cost, so these
numbers bound the achievable trial rate.
"""

import argparse
import time

import numpy as np

from . import _normals_np
from .rng import BACKEND, derive_key

try:
    from . import _normals
except ImportError:
    _normals = None


def _time_fill(fill, key: int, out: np.ndarray, repeats: int) -> float:
    """Best-of-repeats throughput in variates per second."""
    best = float("inf")
    for r in range(repeats):
        t0 = time.perf_counter()
        fill(key, r * out.size, out)
        best = min(best, time.perf_counter() - t0)
    return out.size / best


def run(n: int = 4_000_000, repeats: int = 3) -> dict:
    """Measure all backends; returns {label: variates_per_second}."""
    key = derive_key(20260816, "bench")
    results = {}
    for dtype, tag in ((np.float32, "f32"), (np.float64, "f64")):
        out = np.empty(n, dtype=dtype)
        pure = getattr(_normals_np, f"fill_{tag}")
        results[f"pure numpy {tag}"] = _time_fill(pure, key, out, repeats)
        if _normals is not None:
            comp = getattr(_normals, f"fill_{tag}")
            results[f"compiled {tag}"] = _time_fill(comp, key, out, repeats)
            a = np.empty(n, dtype=dtype)
            b = np.empty(n, dtype=dtype)
            comp(key, 0, a)
            pure(key, 0, b)
            gap = float(np.max(np.abs(a.astype(np.float64)
                                      - b.astype(np.float64))))
            results[f"backend gap {tag}"] = gap

    rng = np.random.Generator(np.random.Philox(key))
    out64 = np.empty(n, dtype=np.float64)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        rng.standard_normal(out=out64)
        best = min(best, time.perf_counter() - t0)
    results["numpy Philox ziggurat f64"] = n / best
    return results


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-n", type=int, default=4_000_000,
                    help="variates per timing run")
    ap.add_argument("--repeats", type=int, default=3,
                    help="timing repeats (best is kept)")
    args = ap.parse_args(argv)

    print(f"active backend: {BACKEND}")
    for label, val in run(args.n, args.repeats).items():
        if label.startswith("backend gap"):
            print(f"{label:28s} max |a-b| = {val:.3g}")
        else:
            print(f"{label:28s} {val / 1e6:8.1f} M variates/s")


if __name__ == "__main__":
    main()
