"""Time the whitened log-map kernel on both backends.

Usage::

    python3 benchmarks/bench_kernels.py [--n 2000] [--dims 2,5,8,16]
"""

import argparse
import timeit

import numpy as np

from gopsa.backend import available_backends, whiten_logm_uvect


def random_spd(rng, n, d):
    X = rng.standard_normal((n, d, d + 2))
    return X @ np.swapaxes(X, -1, -2) / (d + 2) + 0.1 * np.eye(d)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="matrices per call")
    parser.add_argument("--dims", default="2,5,8,16")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = available_backends()
    print(f"{'d':>4} " + " ".join(f"{b + ' [ms]':>14}" for b in backends) + "   speedup")
    for d in (int(v) for v in args.dims.split(",")):
        X = random_spd(rng, args.n, d)
        W = np.linalg.inv(np.linalg.cholesky(random_spd(rng, 1, d)[0]))
        W = 0.5 * (W + W.T) + d * np.eye(d)
        times = {}
        for b in backends:
            whiten_logm_uvect(X, W, backend=b)
            t = min(timeit.repeat(lambda: whiten_logm_uvect(X, W, backend=b),
                                  number=1, repeat=args.repeat))
            times[b] = 1e3 * t
        line = f"{d:>4} " + " ".join(f"{times[b]:>14.2f}" for b in backends)
        if "cython" in times:
            line += f"   {times['python'] / times['cython']:.2f}x"
        print(line)


if __name__ == "__main__":
    main()
