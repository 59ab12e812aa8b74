"""Hot loops of the Newton fixed-point update.

One pass over the whitened data yields the two moments every FastICA
update needs:

    ``G @ Z.T / p``  and  ``mean(1 - G**2, axis=1)``  with ``G = tanh(W @ Z)``

The numba kernel works through column blocks so ``G`` is never materialised
beyond one block.  The numpy kernel is the reference path and the default:
numpy's SIMD ``tanh`` outruns numba's scalar ``exp`` unless numba has SVML
(see ``benchmarks/bench_kernels.py``).  ``PICA_BACKEND=numba`` opts in at
import time.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")


def _select_backend():
    requested = os.environ.get("PICA_BACKEND", "").strip().lower()
    if requested and requested not in BACKENDS:
        raise ValueError(f"PICA_BACKEND must be one of {BACKENDS}, got {requested!r}")
    if requested == "numba":
        if not HAS_NUMBA:
            raise ValueError("PICA_BACKEND=numba but numba is not installed")
        return "numba"
    return "numpy"


BACKEND = _select_backend()


def newton_moments_numpy(W, Z):
    # non-finite input is reported by the caller, not warned about here
    with np.errstate(invalid="ignore", over="ignore"):
        G = np.tanh(W @ Z)
        p = Z.shape[1]
        return (G @ Z.T) / p, (1.0 - G * G).mean(axis=1)


if HAS_NUMBA:
    _BLOCK = 256

    @njit(cache=True, nogil=True, fastmath=True, error_model="numpy")
    def newton_moments_numba(W, Z):
        n, p = Z.shape
        acc = np.zeros((n, n))
        gp = np.zeros(n)
        g = np.empty(_BLOCK)
        for j0 in range(0, p, _BLOCK):
            b = min(p, j0 + _BLOCK) - j0
            for i in range(n):
                for t in range(b):
                    s = 0.0
                    for l in range(n):
                        s += W[i, l] * Z[l, j0 + t]
                    # tanh(s); libm tanh is several times slower than this
                    g[t] = 1.0 - 2.0 / (np.exp(2.0 * s) + 1.0)
                q = 0.0
                for t in range(b):
                    q += g[t] * g[t]
                gp[i] += b - q
                for l in range(n):
                    a = 0.0
                    for t in range(b):
                        a += g[t] * Z[l, j0 + t]
                    acc[i, l] += a
        return acc / p, gp / p

else:  # pragma: no cover
    newton_moments_numba = None


def newton_moments(W, Z, backend=None):
    """Return ``(E[g(WZ) Z^T], E[g'(WZ)])`` for ``g = tanh``.

    ``backend`` overrides the import-time selection; the benchmark uses it
    to time both paths in one process.
    """
    backend = backend or BACKEND
    if backend == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return newton_moments_numba(
            np.ascontiguousarray(W, dtype=np.float64),
            np.ascontiguousarray(Z, dtype=np.float64),
        )
    if backend == "numpy":
        return newton_moments_numpy(W, Z)
    raise ValueError(f"unknown backend {backend!r}")


def warmup():
    """Compile the selected kernel so JIT time never lands inside a timed section."""
    newton_moments(np.eye(2), np.zeros((2, 2)))
