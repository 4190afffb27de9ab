"""Benchmark the compiled kernel lane against the NumPy fallback.

Runs each low-level kernel on representative sizes and prints a table of
per-call times plus the speedup of the compiled lane.  Both lanes are
imported directly, so this works regardless of the EFFACE_KERNELS setting.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from efface._kernels import pykern

try:
    from efface._kernels import _ckern
except ImportError:
    _ckern = None

from efface.imaging import gaussian_kernel


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    img_small = rng.random((32, 32))
    img_tiny = rng.random((8, 8))
    img_large = rng.random((512, 512))
    mask_large = (rng.random((512, 512)) > 0.5).astype(np.float64)
    k1 = gaussian_kernel(1.0)
    k16 = gaussian_kernel(16.0)
    return [
        ("gaussian blur sigma=1, 32x32", lambda m: m.sep_convolve(img_small, k1)),
        ("gaussian blur sigma=1, 512x512", lambda m: m.sep_convolve(img_large, k1)),
        ("gaussian blur sigma=16, 512x512", lambda m: m.sep_convolve(img_large, k16)),
        ("dilate r=1, 512x512", lambda m: m.minmax_filter(mask_large, 1, True)),
        ("erode r=3, 512x512", lambda m: m.minmax_filter(mask_large, 3, False)),
        ("bilinear 8x8 -> 512x512", lambda m: m.resize_bilinear(img_tiny, 512, 512)),
        ("bilinear 512x512 -> 768x768", lambda m: m.resize_bilinear(img_large, 768, 768)),
        ("area 512x512 -> 8x8", lambda m: m.resize_area(img_large, 8, 8)),
        ("area 512x512 -> 100x100", lambda m: m.resize_area(img_large, 100, 100)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for name, call in cases(rng):
        t_py = _best_of(lambda: call(pykern), args.repeats)
        if _ckern is not None:
            t_c = _best_of(lambda: call(_ckern), args.repeats)
            rows.append((name, t_py, t_c, t_py / t_c))
        else:
            rows.append((name, t_py, None, None))

    header = f"{'kernel':36s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, t_py, t_c, speedup in rows:
        if t_c is None:
            print(f"{name:36s} {t_py * 1e3:9.3f}ms {'n/a':>10s} {'n/a':>8s}")
        else:
            print(f"{name:36s} {t_py * 1e3:9.3f}ms {t_c * 1e3:9.3f}ms {speedup:7.1f}x")
    if _ckern is None:
        print("\ncompiled lane unavailable; build it with `pip install -e .`")


if __name__ == "__main__":
    main()
