"""Benchmark: compiled vs pure-Python closure/enumeration kernels.

Usage: python benchmarks/bench_closure.py [--repeat N]

Times the exhaustive per-shape audit (the hot path behind `scm-ident
enumerate`) and a batch of closure-family generations on every available
backend, and prints the speedup of the compiled kernel when present.
"""

import argparse
import time

import numpy as np

from scm_ident._kernels import backends

AUDIT_SHAPES = [(2, 4), (3, 5), (2, 8), (4, 5)]
CLOSURE_BATCH = 2000


def time_call(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def closure_batch(kernel, masks_batch, n):
    for masks in masks_batch:
        kernel.closure_members(masks, n)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3, help="best-of repetitions")
    args = parser.parse_args()

    available = backends()
    print(f"backends available: {', '.join(available)}")
    rng = np.random.default_rng(0)
    masks_batch = [
        [int(v) for v in rng.integers(0, 1 << 10, size=3)] for _ in range(CLOSURE_BATCH)
    ]

    rows = []
    for m, n in AUDIT_SHAPES:
        timings = {}
        results = {}
        for name, kernel in available.items():
            timings[name] = time_call(kernel.audit_shape, m, n, repeat=args.repeat)
            results[name] = kernel.audit_shape(m, n)
        first = next(iter(results.values()))
        for other in results.values():
            if other != first:
                raise AssertionError(f"backend disagreement on audit {m}x{n}")
        rows.append((f"audit {m}x{n} ({1 << (m * n)} matrices)", timings))

    timings = {
        name: time_call(closure_batch, kernel, masks_batch, 10, repeat=args.repeat)
        for name, kernel in available.items()
    }
    rows.append((f"closure x{CLOSURE_BATCH} (n=10)", timings))

    width = max(len(label) for label, _ in rows) + 2
    print(f"{'workload'.ljust(width)}{'pure':>12}{'fast':>12}{'speedup':>10}")
    for label, timings in rows:
        pure_ms = timings["pure"] * 1000
        if "fast" in timings:
            fast_ms = timings["fast"] * 1000
            print(
                f"{label.ljust(width)}{pure_ms:>10.1f}ms{fast_ms:>10.2f}ms"
                f"{timings['pure'] / timings['fast']:>9.1f}x"
            )
        else:
            print(f"{label.ljust(width)}{pure_ms:>10.1f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
