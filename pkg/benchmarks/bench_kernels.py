"""Time the numba and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Compilation is triggered once before timing.  Each case also checks that
the two backends agree.
"""
import argparse
import time

import numpy as np

from emdiff import _accel

CASES = [
    # (queries, training points, dimension)
    (256, 64, 2),
    (256, 10_000, 2),
    (1024, 1000, 16),
    (128, 1000, 3072),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _accel.numba is None:
        raise SystemExit("numba is not installed")
    g = np.random.default_rng(0)
    warm = g.normal(size=(4, 2))
    _accel.kernel_moments(warm, warm, np.zeros(4), np.ones(4), np.ones(4), warm, backend="numba")
    _accel.nearest_sqdist(warm, warm, backend="numba")

    print(f"{'kernel':<16}{'m':>7}{'n':>8}{'d':>6}{'numpy s':>11}{'numba s':>11}{'speedup':>9}")
    for m, n, d in CASES:
        X = g.normal(size=(m, d))
        A = g.normal(size=(n, d))
        args_k = (X, A, np.zeros(n), np.full(n, 2.0), np.ones(n), A)
        res = {}
        for be in ("numpy", "numba"):
            res[be] = _accel.kernel_moments(*args_k, backend=be)
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(res["numpy"], res["numba"]))
        assert err < 1e-9, err
        tn = best_of(lambda: _accel.kernel_moments(*args_k, backend="numpy"), args.repeat)
        tb = best_of(lambda: _accel.kernel_moments(*args_k, backend="numba"), args.repeat)
        print(f"{'kernel_moments':<16}{m:>7}{n:>8}{d:>6}{tn:>11.4f}{tb:>11.4f}{tn / tb:>9.2f}")
        tn = best_of(lambda: _accel.nearest_sqdist(X, A, backend="numpy"), args.repeat)
        tb = best_of(lambda: _accel.nearest_sqdist(X, A, backend="numba"), args.repeat)
        print(f"{'nearest_sqdist':<16}{m:>7}{n:>8}{d:>6}{tn:>11.4f}{tb:>11.4f}{tn / tb:>9.2f}")


if __name__ == "__main__":
    main()
