"""Compiled vs pure-Python SMO loop on random classification problems.

    python3 benchmarks/bench_smo.py [--sizes 50 100 200] [--repeats 3]

Prints one row per size: wall time of each backend (best of ``repeats``),
speedup, and the largest dual-objective difference between the two.
"""
import argparse
import time

import numpy as np

from nbmkl import svm
from nbmkl.kernels import KernelSpec, gram, normalize_gram


def problem(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 5))
    y = np.where(X @ rng.standard_normal(5) + 0.5 * rng.standard_normal(n) >= 0, 1.0, -1.0)
    K = normalize_gram(gram(KernelSpec("gaussian", spread=2.0), X))
    return K, y


def best_time(fn, repeats):
    out, best = None, np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--C", type=float, default=10.0)
    args = ap.parse_args(argv)
    if "cython" not in svm.LOOPS:
        print("compiled extension not built; only the Python loop is available")
    print(f"{'n':>6} {'python s':>10} {'cython s':>10} {'speedup':>8} {'|dobj|':>10}")
    for n in args.sizes:
        K, y = problem(n, n)
        tp, sp = best_time(lambda: svm.solve_svc(K, y, args.C, tol=1e-5, backend="python"),
                           args.repeats)
        if "cython" in svm.LOOPS:
            tc, sc = best_time(lambda: svm.solve_svc(K, y, args.C, tol=1e-5, backend="cython"),
                               args.repeats)
            print(f"{n:>6} {tp:>10.4f} {tc:>10.4f} {tp / tc:>8.1f} "
                  f"{abs(sp.objective - sc.objective):>10.2e}")
        else:
            print(f"{n:>6} {tp:>10.4f} {'-':>10} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
