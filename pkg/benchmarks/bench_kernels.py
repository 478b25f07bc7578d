"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [repeats]

Workloads mirror what one DE evaluation does: rasterize an 8-anchor,
32-samples-per-segment contour, and run the self-intersection check on the
same loop. Both backends are imported explicitly so the script works no
matter which one the package selected at import.
"""

import sys
import time

import numpy as np

from crosspatch._kernels import pure
from crosspatch.geometry import close_contour, initial_anchors

try:
    from crosspatch._kernels import _core as compiled
except ImportError:
    compiled = None


def make_loop(rng, center, radius, n=8, samples=32):
    anchors = initial_anchors(center, radius, n)
    anchors += rng.uniform(-radius * 0.3, radius * 0.3, size=anchors.shape)
    return close_contour(anchors, samples).loop_vertices()


def bench(fn, args_list, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best / len(args_list)


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    rng = np.random.default_rng(0)

    workloads = {
        "fill 96x64 (demo scene)": [
            (v[:, 0], v[:, 1], 96, 64)
            for v in (make_loop(rng, rng.uniform(20, 40, 2), rng.uniform(8, 14)) for _ in range(200))
        ],
        "fill 128x128": [
            (v[:, 0], v[:, 1], 128, 128)
            for v in (make_loop(rng, rng.uniform(40, 90, 2), rng.uniform(12, 24)) for _ in range(200))
        ],
        "simple check (256 edges)": [
            (v[:, 0], v[:, 1])
            for v in (make_loop(rng, rng.uniform(20, 40, 2), rng.uniform(8, 14)) for _ in range(100))
        ],
    }

    backends = [("pure", pure)] + ([("compiled", compiled)] if compiled else [])
    print(f"{'workload':<28} " + " ".join(f"{name:>12}" for name, _ in backends) + f" {'speedup':>9}")
    for label, args_list in workloads.items():
        per_call = {}
        for name, mod in backends:
            fn = mod.fill_polygon if label.startswith("fill") else mod.polyline_is_simple
            per_call[name] = bench(fn, args_list, repeats)
        row = f"{label:<28} " + " ".join(f"{per_call[name] * 1e6:>10.1f}us" for name, _ in backends)
        if compiled:
            row += f" {per_call['pure'] / per_call['compiled']:>8.1f}x"
        print(row)

    if compiled:
        # sanity: backends agree bit-exactly on this workload
        for v_args in workloads["fill 96x64 (demo scene)"][:20]:
            assert np.array_equal(compiled.fill_polygon(*v_args), pure.fill_polygon(*v_args))
        print("\nbackends agree bit-exactly on sampled workloads")
    else:
        print("\ncompiled extension not built; showing fallback only")


if __name__ == "__main__":
    main()
