"""Per-node processing of progressive ICA.

Every intermediate node shrinks the sampling step by the growth factor,
continues the Newton iteration from its predecessor's ``W`` on the denser
subset, and hands ``(W, mu, alpha)`` to the next hop.  Once the step drops
below one, the receiving node iterates on the full data and reconstructs.
"""

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractError, NumericError, ParameterError
from .ica import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    WhiteningTransform,
    apply_whitening,
    iterate,
    newton_step,
    reconstruct,
)
from .metrics import cosine_distance

TOLERANCE_REACHED = "tolerance-reached"
SLOW_GRADIENT = "slow-gradient"
LAST_NODE_CONVERGED = "last-node-converged"
ITERATION_CAP = "iteration-cap"
EXIT_REASONS = (TOLERANCE_REACHED, SLOW_GRADIENT, LAST_NODE_CONVERGED, ITERATION_CAP)

WARMUP_ITERATIONS = 3
LAST_NODE_CAP_FACTOR = 10


@dataclass(frozen=True)
class PicaParams:
    """Tuning knobs of the progressive scheme.

    ``grad_threshold`` is the ``P_break`` factor of the slow-gradient test.
    """

    tol: float = DEFAULT_TOL
    grad_threshold: float = 0.7
    max_local_iter: int = DEFAULT_MAX_ITER
    mu0: float = 4130.0
    alpha0: float = 2.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if not 0 < self.grad_threshold < 1:
            raise ParameterError(f"grad_threshold must be in (0, 1), got {self.grad_threshold}")
        if self.max_local_iter < 1:
            raise ParameterError(f"max_local_iter must be >= 1, got {self.max_local_iter}")
        if not self.mu0 >= 1:
            raise ParameterError(f"mu0 must be >= 1, got {self.mu0}")
        if not self.alpha0 >= 2:
            raise ParameterError(f"alpha0 must be >= 2, got {self.alpha0}")

    @property
    def last_node_cap(self):
        return LAST_NODE_CAP_FACTOR * self.max_local_iter


@dataclass(frozen=True)
class SeparationState:
    """Payload relayed between hops."""

    W: np.ndarray
    mu: float
    alpha: float
    whitening: WhiteningTransform
    hop: int = 0


@dataclass(frozen=True)
class NodeReport:
    hop: int
    exit_reason: str
    iterations: int
    samples_used: int
    wall_time: float
    final_scalar: float
    cosine_distance: Optional[float] = None

    @property
    def weighted_work(self):
        return self.iterations * self.samples_used


def initial_state(W0, params, whitening):
    return SeparationState(W=W0, mu=float(params.mu0), alpha=float(params.alpha0),
                           whitening=whitening, hop=0)


def update_step(mu_prev, alpha):
    """``mu_prev / alpha``, kept real valued."""
    if not mu_prev > 0:
        raise ParameterError(f"mu must be positive, got {mu_prev}")
    if not alpha >= 2:
        raise ParameterError(f"alpha must be >= 2, got {alpha}")
    return mu_prev / alpha


def effective_step(mu):
    return max(1, int(round(mu)))


def sample_columns(X, mu):
    """Every ``round(mu)``-th column of ``X`` starting at column 0 (a view)."""
    if not mu >= 1:
        raise ContractError(f"sampling step {mu} < 1: use the full data instead")
    return X[:, ::effective_step(mu)]


def slow_gradient_check(history, p_break):
    """True when the scalar history shows diminishing returns.

    Fires when ``sum(h) < p_break * 0.5 * (max(h) + h[-1]) * len(h)``; never
    before :data:`WARMUP_ITERATIONS` entries.
    """
    if len(history) == 0:
        raise ParameterError("history must be nonempty")
    if len(history) < WARMUP_ITERATIONS:
        return False
    bound = p_break * 0.5 * (max(history) + history[-1]) * len(history)
    return sum(history) < bound


def _distance(W, whitening, mixing):
    if mixing is None:
        return None
    return cosine_distance(W @ whitening.V, mixing)


def node_process(X, state, params, mixing=None):
    """Intermediate-node logic; returns ``(next_state, NodeReport)``.

    ``mixing`` (the true ``A``) is only used to score the handed-over ``W``
    and is excluded from the timed section.
    """
    hop = state.hop + 1
    mu = update_step(state.mu, state.alpha)
    if mu < 1:
        raise ContractError(f"hop {hop}: mu={mu} < 1, route to last_node_process")

    start = time.perf_counter()
    Z = apply_whitening(state.whitening, sample_columns(X, mu))
    W = state.W
    history = []
    reason = ITERATION_CAP
    try:
        for _ in range(params.max_local_iter):
            W, delta = newton_step(Z, W)
            history.append(delta.scalar)
            if delta.scalar < params.tol:
                reason = TOLERANCE_REACHED
                break
            if slow_gradient_check(history, params.grad_threshold):
                reason = SLOW_GRADIENT
                break
    except NumericError as exc:
        raise NumericError(str(exc), hop=hop) from exc
    elapsed = time.perf_counter() - start

    if reason == TOLERANCE_REACHED:
        alpha = state.alpha * 2
    else:
        alpha = max(2.0, state.alpha / 2)
    report = NodeReport(
        hop=hop,
        exit_reason=reason,
        iterations=len(history),
        samples_used=Z.shape[1],
        wall_time=elapsed,
        final_scalar=history[-1],
        cosine_distance=_distance(W, state.whitening, mixing),
    )
    return replace(state, W=W, mu=mu, alpha=alpha, hop=hop), report


def last_node_process(X, state, params, mixing=None, hop=None):
    """Finish on the full data and reconstruct.

    Returns ``(W, S_hat, NodeReport)``.  ``hop`` defaults to the position
    after the incoming state.
    """
    hop = state.hop + 1 if hop is None else hop
    start = time.perf_counter()
    try:
        Z = apply_whitening(state.whitening, X)
        W, iterations, scalar = iterate(Z, state.W, params.tol, params.last_node_cap)
    except NumericError as exc:
        raise NumericError(str(exc), hop=hop) from exc
    S_hat = reconstruct(W, state.whitening, X)
    elapsed = time.perf_counter() - start

    report = NodeReport(
        hop=hop,
        exit_reason=LAST_NODE_CONVERGED if scalar < params.tol else ITERATION_CAP,
        iterations=iterations,
        samples_used=X.shape[1],
        wall_time=elapsed,
        final_scalar=scalar,
        cosine_distance=_distance(W, state.whitening, mixing),
    )
    return W, S_hat, report
