"""Forwarding-chain simulation: AP ingress, k intermediate nodes, server.

A chain is sequential by construction.  :func:`run_scenario` runs
independent trials, optionally on a thread pool capped by ``PICA_THREADS``.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from ._kernels import warmup
from .errors import ParameterError, PicaError
from .ica import fastica_full, fit_whitening, random_orthonormal, reconstruct
from .metrics import cosine_distance, sdr
from .progressive import (
    ITERATION_CAP,
    LAST_NODE_CONVERGED,
    NodeReport,
    PicaParams,
    initial_state,
    last_node_process,
    node_process,
    update_step,
)
from .signal import generate_mixing_matrix, generate_sources, load_wav_sources, mix

METHODS = ("pica", "fastica")


@dataclass(frozen=True)
class ChainConfig:
    k: int = 0
    params: PicaParams = field(default_factory=PicaParams)
    link_delay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ParameterError(f"k must be >= 0, got {self.k}")
        if self.link_delay < 0:
            raise ParameterError(f"link_delay must be >= 0, got {self.link_delay}")


@dataclass(frozen=True)
class TrialResult:
    method: str
    trial_seed: int
    k: int
    mu0: float
    alpha0: float
    tol: float
    p_break: float
    link_delay: float
    node_reports: tuple
    total_processing_time: float
    sdr: tuple
    mean_sdr: float
    error: Optional[str] = None

    @property
    def weighted_work(self):
        return sum(r.weighted_work for r in self.node_reports)

    @property
    def server_work(self):
        return self.node_reports[-1].weighted_work if self.node_reports else 0

    @property
    def server_share(self):
        total = self.weighted_work
        return self.server_work / total if total else math.nan

    @property
    def intermediate_reports(self):
        return self.node_reports[:-1]


def progressive_ica(X, cfg, mixing=None):
    """Run one pICA chain on ``X``.

    Returns ``(W, whitening, S_hat, reports)``.  The ingress whitening fit is
    charged to the first reporting node.
    """
    params = cfg.params
    start = time.perf_counter()
    whitening = fit_whitening(X)
    ingress = time.perf_counter() - start

    state = initial_state(random_orthonormal(X.shape[0], cfg.seed), params, whitening)
    reports = []
    for _ in range(cfg.k):
        if update_step(state.mu, state.alpha) < 1:
            break  # remaining nodes only forward
        state, report = node_process(X, state, params, mixing=mixing)
        reports.append(report)
    W, S_hat, report = last_node_process(X, state, params, mixing=mixing, hop=cfg.k + 1)
    reports.append(report)
    reports[0] = replace(reports[0], wall_time=reports[0].wall_time + ingress)
    return W, whitening, S_hat, reports


def centralized_ica(X, cfg, mixing=None):
    """FastICA baseline on the server, with the same iteration budget as the
    last pICA node.  Returns ``(W, whitening, S_hat, reports)``."""
    params = cfg.params
    start = time.perf_counter()
    T, W, iterations, scalar = fastica_full(X, params.tol, params.last_node_cap, cfg.seed)
    S_hat = reconstruct(W, T, X)
    elapsed = time.perf_counter() - start
    report = NodeReport(
        hop=cfg.k + 1,
        exit_reason=LAST_NODE_CONVERGED if scalar < params.tol else ITERATION_CAP,
        iterations=iterations,
        samples_used=X.shape[1],
        wall_time=elapsed,
        final_scalar=scalar,
        cosine_distance=None if mixing is None else cosine_distance(W @ T.V, mixing),
    )
    return W, T, S_hat, [report]


def _result(method, cfg, reports, S_hat, S_truth):
    if S_truth is not None:
        per_source, mean = sdr(S_hat, S_truth)
        per_source = tuple(float(v) for v in per_source)
    else:
        per_source, mean = (), math.nan
    wall = sum(r.wall_time for r in reports)
    p = cfg.params
    return TrialResult(
        method=method,
        trial_seed=cfg.seed,
        k=cfg.k,
        mu0=p.mu0,
        alpha0=p.alpha0,
        tol=p.tol,
        p_break=p.grad_threshold,
        link_delay=cfg.link_delay,
        node_reports=tuple(reports),
        total_processing_time=wall + cfg.k * cfg.link_delay,
        sdr=per_source,
        mean_sdr=float(mean),
    )


def run_chain(X, S_truth=None, A=None, cfg=None):
    """Progressive chain trial; ``S_truth`` enables SDR, ``A`` enables D_i."""
    cfg = cfg or ChainConfig()
    _, _, S_hat, reports = progressive_ica(X, cfg, mixing=A)
    return _result("pica", cfg, reports, S_hat, S_truth)


def run_baseline(X, S_truth=None, A=None, cfg=None):
    cfg = cfg or ChainConfig()
    _, _, S_hat, reports = centralized_ica(X, cfg, mixing=A)
    return _result("fastica", cfg, reports, S_hat, S_truth)


@dataclass(frozen=True)
class SyntheticDataset:
    n: int = 4
    m: int = 160000
    kind: str = "mixed"

    def sources(self, seed):
        return generate_sources(self.n, self.m, seed=seed, kind=self.kind)


@dataclass(frozen=True)
class WavDataset:
    """Fixed recorded sources; only the mixing matrix varies per trial."""

    paths: tuple

    def sources(self, seed):
        return _load_wav_cached(tuple(self.paths)).copy()


@lru_cache(maxsize=4)
def _load_wav_cached(paths):
    S, _ = load_wav_sources(paths)
    return S


def make_trial(dataset, seed):
    """Sources, mixing matrix and mixture for one trial seed."""
    S = dataset.sources(seed)
    A = generate_mixing_matrix(S.shape[0], seed=seed)
    return S, A, mix(A, S)


def _failed(method, cfg, exc):
    p = cfg.params
    return TrialResult(
        method=method, trial_seed=cfg.seed, k=cfg.k, mu0=p.mu0, alpha0=p.alpha0,
        tol=p.tol, p_break=p.grad_threshold, link_delay=cfg.link_delay,
        node_reports=(), total_processing_time=math.nan, sdr=(), mean_sdr=math.nan,
        error=f"{type(exc).__name__}: {exc}",
    )


def run_trial(method, dataset, cfg):
    runner = {"pica": run_chain, "fastica": run_baseline}[method]
    try:
        S, A, X = make_trial(dataset, cfg.seed)
        return runner(X, S, A, cfg)
    except (PicaError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _failed(method, cfg, exc)


def thread_count():
    raw = os.environ.get("PICA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"PICA_THREADS must be an integer, got {raw!r}") from None


def run_scenario(method, dataset, configs, trials, threads=None):
    """Run ``trials`` seeded trials for every config.

    Trial ``t`` of a config uses seed ``cfg.seed + t`` for sources, mixing and
    W initialisation, so different methods see identical data.  Results come
    back grouped by config, then by trial, whatever the thread count.
    """
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; choose from {METHODS}")
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    jobs = [replace(cfg, seed=cfg.seed + t) for cfg in configs for t in range(trials)]
    warmup()
    threads = threads or thread_count()
    if threads == 1:
        return [run_trial(method, dataset, job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: run_trial(method, dataset, job), jobs))
