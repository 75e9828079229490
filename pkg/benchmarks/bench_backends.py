"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rfa import _fallback, rng

try:
    from rfa import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(n: int, trees: int):
    g = np.random.default_rng(0)
    X, Y, Q = g.random((n, 2)), g.normal(size=n), g.random((256, 2))
    seeds = rng.derive_seeds(1, "bench", trees)
    nan = float("nan")
    return {
        "uniform_predictions(k=6)": lambda K: K.uniform_predictions(X, Y, 6, seeds, Q),
        "quantile_predictions(a_n=100)": lambda K: K.quantile_predictions(X, Y, 100, 0.8, nan, seeds, Q),
        "build_quantile(a_n=n)": lambda K: [K.build_quantile(X, n, 0.8, nan, int(s)) for s in seeds[:20]],
    }


def _equal(a, b) -> bool:
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--trees", type=int, default=200)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; nothing to compare")
        return
    print(f"{'kernel':32s} {'python [s]':>11s} {'compiled [s]':>13s} {'speed-up':>9s}")
    for name, fn in _cases(args.n, args.trees).items():
        a = fn(_fallback)
        b = fn(_kernels)
        same = _equal(a, b)
        tp = _best(lambda: fn(_fallback), args.repeat)
        tc = _best(lambda: fn(_kernels), args.repeat)
        print(f"{name:32s} {tp:11.4f} {tc:13.4f} {tp / tc:8.1f}x{'' if same else '  OUTPUT MISMATCH'}")


if __name__ == "__main__":
    main()
