"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 64]

Prints one line per kernel with the best-of-repeat time for each backend
and the speed-up, after checking both backends return the same answer.
"""

import argparse
import time

import numpy as np

from hetofdma import _pykernels as py
from hetofdma import channel

try:
    from hetofdma import _kernels as cy
except ImportError:
    cy = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--users", type=int, default=8)
    ap.add_argument("--dc-users", type=int, default=4)
    ap.add_argument("--trials", type=int, default=10)
    args = ap.parse_args()
    if cy is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")

    K, K1, N = args.users, args.dc_users, args.n
    model = channel.build_model()
    cases = []
    for t in range(args.trials):
        alpha, _ = channel.realization_cnr(model, K, N, 2024, t, 20.0)
        L0 = float(np.min(1.0 / alpha[K1:])) * (1 - 1e-9) * 2 ** 10
        cases.append((alpha, L0))
    R = np.full(K1, 80.0 / K1)
    beta, mu = np.full(K1, 3.0), 1.0

    def inner(mod):
        return [mod.inner_solve(a, K1, R, L0, 0.005, 1e-6, 10_000, 4 * N) for a, L0 in cases]

    def dual(mod):
        return [mod.subcarrier_max(a, K1, beta, mu) for a, _ in cases]

    for name, fn in (("inner_solve", inner), ("subcarrier_max", dual)):
        a, b = fn(py), fn(cy)
        for x, y in zip(a, b):
            for u, v in zip(x, y):
                if not np.allclose(np.asarray(u), np.asarray(v), rtol=1e-9, atol=1e-12):
                    raise SystemExit(f"{name}: backends disagree")
        tp = best_of(lambda: fn(py), args.repeat)
        tc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:16s} python {tp * 1e3:9.2f} ms   cython {tc * 1e3:8.2f} ms   "
              f"x{tp / tc:6.1f}")


if __name__ == "__main__":
    main()
