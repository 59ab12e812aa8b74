"""Time the Newton-moment kernel and a full FastICA fit under both backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per (case, backend) with the best time over ``--repeat`` runs
and the numpy/numba speed ratio.
"""

import argparse
import time

import numpy as np

from pica import _kernels
from pica.ica import apply_whitening, fit_whitening, iterate, random_orthonormal
from pica.signal import generate_mixing_matrix, generate_sources, mix

SIZES = (640, 20000, 160000)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def fastica_on(Z, backend):
    # iterate() calls newton_moments with the module default; swap it for the run
    saved = _kernels.BACKEND
    _kernels.BACKEND = backend
    try:
        return iterate(Z, random_orthonormal(Z.shape[0], 0), 1e-4, 2000)
    finally:
        _kernels.BACKEND = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    _kernels.warmup()
    _kernels.newton_moments(np.eye(2), np.zeros((2, 2)), backend="numba")
    S = generate_sources(4, max(SIZES), seed=0)
    X = mix(generate_mixing_matrix(4, seed=0), S)
    Z_full = apply_whitening(fit_whitening(X), X)
    W = random_orthonormal(4, 0)

    print(f"{'case':<22} {'backend':<7} {'best [ms]':>10} {'numpy/numba':>12}")
    for p in SIZES:
        Z = np.ascontiguousarray(Z_full[:, :p])
        times = {b: best_of(lambda b=b: _kernels.newton_moments(W, Z, backend=b), args.repeat)
                 for b in _kernels.BACKENDS}
        for b in _kernels.BACKENDS:
            print(f"{'moments p=' + str(p):<22} {b:<7} {1e3 * times[b]:10.3f} "
                  f"{times['numpy'] / times['numba']:12.2f}")
        a, c = (_kernels.newton_moments(W, Z, backend=b) for b in _kernels.BACKENDS)
        assert np.allclose(a[0], c[0], atol=1e-12) and np.allclose(a[1], c[1], atol=1e-12)

    times = {b: best_of(lambda b=b: fastica_on(Z_full, b), args.repeat) for b in _kernels.BACKENDS}
    for b in _kernels.BACKENDS:
        print(f"{'fastica p=' + str(Z_full.shape[1]):<22} {b:<7} {1e3 * times[b]:10.3f} "
              f"{times['numpy'] / times['numba']:12.2f}")


if __name__ == "__main__":
    main()
