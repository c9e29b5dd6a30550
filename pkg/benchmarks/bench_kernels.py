"""Time the compiled image kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--size 64] [--records 500] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from aquaclean import kernels
from aquaclean.kernels import _fallback


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--records", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    mosaic = rng.random((args.size, args.size))
    query = rng.random(32)
    matrix = rng.random((args.records, 32))
    cases = {
        "demosaic_bilinear": (mosaic,),
        "median3x3": (mosaic,),
        "nearest_sq": (query, matrix),
    }
    backends = {"python": _fallback}
    compiled = kernels.compiled()
    if compiled is not None:
        backends["cython"] = compiled

    print(f"{'kernel':<20}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, fargs in cases.items():
        per_call = {}
        for bname, mod in backends.items():
            fn = getattr(mod, name)
            per_call[bname] = min(timeit.repeat(lambda: fn(*fargs), number=args.repeat, repeat=3)) / args.repeat
        cells = "".join(f"{1e6 * t:>11.1f} us" for t in per_call.values())
        speedup = f"{per_call['python'] / per_call['cython']:>9.1f}x" if "cython" in per_call else f"{'n/a':>10}"
        print(f"{name:<20}{cells}{speedup}")


if __name__ == "__main__":
    main()
