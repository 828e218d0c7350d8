"""Time the numba kernels against their numpy fallbacks and check they agree.

Run with ``python benchmarks/bench_kernels.py [--repeat N] [--size S]``.
Compilation happens in a warm-up call and is excluded from the timings.
"""

import argparse
import time

import numpy as np

from projentropy import _kernels as k


def _best(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(size, rng):
    n = 16
    mat = np.tril(np.ones((n, n))) / n
    weights = np.polynomial.legendre.leggauss(n)[1]
    rows = [rng.normal(size=(size, 2)) for _ in range(4)]
    x = np.linspace(-1.0, 1.0, int(np.sqrt(size)) * 4)
    m0 = np.cumsum(1.0 + x ** 2) * (x[1] - x[0])
    m1 = np.cumsum(x * (1.0 + x ** 2)) * (x[1] - x[0])
    m0 -= m0[0]
    m1 -= m1[0]
    return {
        "row_dot": ((rng.normal(size=(size, 64)), rng.normal(size=(size, 64))),
                    k.row_dot_numpy, k.row_dot_numba),
        "cumulative_segments": ((rng.normal(size=(size // 16, 16, n)), mat, weights,
                                 rng.uniform(0.1, 1.0, size=(size // 16, 16))),
                                k.cumulative_segments_numpy, k.cumulative_segments_numba),
        "cross_ratio_terms": (tuple(rows), k.cross_ratio_terms_numpy, k.cross_ratio_terms_numba),
        "barycenter_table": ((x, m0, m1), k.barycenter_table_numpy, k.barycenter_table_numba),
    }


def _max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    worst = 0.0
    for u, v in zip(a, b):
        u, v = np.asarray(u), np.asarray(v)
        mask = np.isfinite(u) & np.isfinite(v)
        scale = np.maximum(1.0, np.abs(u[mask]))
        worst = max(worst, float(np.max(np.abs(u[mask] - v[mask]) / scale)) if mask.any() else 0.0)
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=20000)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        print("numba unavailable or disabled; only the numpy path can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max rel diff':>14}")
    for name, (inputs, np_fn, nb_fn) in _cases(args.size, rng).items():
        t_np = _best(np_fn, inputs, args.repeat)
        if k.HAVE_NUMBA:
            t_nb = _best(nb_fn, inputs, args.repeat)
            diff = _max_diff(np_fn(*inputs), nb_fn(*inputs))
            print(f"{name:<22}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>14.2e}")
        else:
            print(f"{name:<22}{1e3 * t_np:>12.3f}{'-':>12}{'-':>10}{'-':>14}")


if __name__ == "__main__":
    main()
