"""Centering, whitening and the symmetric FastICA fixed-point iteration.

The separation matrix ``W`` always acts on whitened data; the composite
unmixing applied to raw mixtures is ``W @ V`` after mean removal.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import newton_moments
from .errors import DegenerateInputError, NumericError, ParameterError

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 200
RANK_RTOL = 1e-12

_W_INIT_SALT = 0x1C0DE


@dataclass(frozen=True)
class WhiteningTransform:
    """Per-channel ``mean`` and sphering matrix ``V``."""

    mean: np.ndarray
    V: np.ndarray

    @property
    def n(self):
        return self.V.shape[0]


@dataclass(frozen=True)
class IterationDelta:
    """``matrix = W_new @ W_prev.T - I`` and its sign-invariant reduction."""

    matrix: np.ndarray
    scalar: float


def fit_whitening(X):
    """Fit ``V = D^{-1/2} E^T`` from the eigendecomposition of cov(X)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 2:
        raise ParameterError(f"need an n x m matrix with m >= 2, got {X.shape}")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    cov = (Xc @ Xc.T) / Xc.shape[1]
    d, E = np.linalg.eigh(cov)
    if not np.all(np.isfinite(d)):
        raise NumericError("non-finite covariance")
    if d[0] <= RANK_RTOL * d[-1]:
        raise DegenerateInputError(
            f"covariance is rank deficient (eigenvalues {d[0]:.3g} .. {d[-1]:.3g})"
        )
    V = (E / np.sqrt(d)).T
    return WhiteningTransform(mean=mean, V=V)


def apply_whitening(T, X):
    """Return ``V @ (X - mean)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != T.n or X.shape[1] < 1:
        raise ParameterError(f"cannot whiten {X.shape} with an n={T.n} transform")
    return T.V @ (X - T.mean[:, None])


def random_orthonormal(n, seed=0):
    """Seeded random orthonormal matrix (QR of a Gaussian draw, sign-fixed)."""
    rng = np.random.default_rng([seed, _W_INIT_SALT])
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def symmetric_decorrelation(W):
    """Return ``(W W^T)^{-1/2} W``."""
    s, u = np.linalg.eigh(W @ W.T)
    if not np.all(np.isfinite(s)) or s[0] <= np.finfo(float).eps * max(s[-1], 0.0):
        raise NumericError("W W^T is singular; cannot decorrelate")
    return (u / np.sqrt(s)) @ u.T @ W


def convergence_scalar(W_new, W_prev):
    """``max_i | |diag(W_new W_prev^T)_i| - 1 |``; invariant to row sign flips."""
    return float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W_prev)) - 1.0)))


def newton_step(Z, W_prev):
    """One symmetric fixed-point update with ``g = tanh``.

    ``W_raw = E[g(WZ) Z^T] - diag(E[g'(WZ)]) W`` followed by symmetric
    decorrelation.  Returns ``(W_new, IterationDelta)``.
    """
    if Z.shape[1] < Z.shape[0]:
        raise ParameterError(f"need at least n={Z.shape[0]} columns, got {Z.shape[1]}")
    gz, gp = newton_moments(W_prev, Z)
    if not (np.all(np.isfinite(gz)) and np.all(np.isfinite(gp))):
        raise NumericError("non-finite values in whitened data")
    W_new = symmetric_decorrelation(gz - gp[:, None] * W_prev)
    product = W_new @ W_prev.T
    scalar = float(np.max(np.abs(np.abs(np.diag(product)) - 1.0)))
    return W_new, IterationDelta(matrix=product - np.eye(W_new.shape[0]), scalar=scalar)


def iterate(Z, W, tol, max_iter):
    """Run ``newton_step`` until the scalar drops below ``tol``.

    Returns ``(W, iterations, last_scalar)``; ``iterations == max_iter`` with
    ``last_scalar >= tol`` means the cap was hit.
    """
    scalar = np.inf
    for it in range(1, max_iter + 1):
        W, delta = newton_step(Z, W)
        scalar = delta.scalar
        if scalar < tol:
            return W, it, scalar
    return W, max_iter, scalar


def fastica(X, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, seed=0):
    """Centralised symmetric FastICA on all columns of ``X``.

    Returns ``(whitening, W, iterations)``.  Hitting ``max_iter`` is not an
    error.
    """
    T, W, iterations, _ = fastica_full(X, tol, max_iter, seed)
    return T, W, iterations


def fastica_full(X, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, seed=0):
    """Like :func:`fastica` but also returns the final convergence scalar."""
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    T = fit_whitening(X)
    Z = apply_whitening(T, X)
    W, iterations, scalar = iterate(Z, random_orthonormal(T.n, seed), tol, max_iter)
    return T, W, iterations, scalar


def reconstruct(W, T, X):
    """Separated sources ``W @ V @ (X - mean)`` over every column of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != T.n or W.shape != (T.n, T.n):
        raise ParameterError(f"shape mismatch: W{W.shape}, V{T.V.shape}, X{X.shape}")
    return (W @ T.V) @ (X - T.mean[:, None])
