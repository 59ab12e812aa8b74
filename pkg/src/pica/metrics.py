"""Scoring of separated sources against ground truth."""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateInputError, NumericError, ParameterError

SDR_CAP_DB = 100.0
MAX_ALIGN_SOURCES = 8
Z_95 = 1.96


@dataclass(frozen=True)
class Alignment:
    """``permutation[j]`` is the estimate row matched to truth row ``j``.

    ``scales[j]`` is the least-squares gain mapping that row onto truth row ``j``.
    """

    permutation: tuple
    scales: np.ndarray


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    ci95_low: float
    ci95_high: float
    count: int


@lru_cache(maxsize=None)
def _permutations(n):
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def best_permutation(score):
    """Permutation ``p`` maximising ``sum_j score[p[j], j]`` by exhaustive search."""
    n = score.shape[0]
    if n > MAX_ALIGN_SOURCES:
        raise ParameterError(f"exhaustive alignment supports n <= {MAX_ALIGN_SOURCES}, got {n}")
    perms = _permutations(n)
    totals = score[perms, np.arange(n)].sum(axis=1)
    return tuple(int(i) for i in perms[np.argmax(totals)])


def align(S_hat, S_truth):
    S_hat = np.asarray(S_hat, dtype=np.float64)
    S_truth = np.asarray(S_truth, dtype=np.float64)
    if S_hat.shape != S_truth.shape or S_hat.ndim != 2:
        raise ParameterError(f"shape mismatch: {S_hat.shape} vs {S_truth.shape}")
    if np.any(S_hat.std(axis=1) == 0) or np.any(S_truth.std(axis=1) == 0):
        raise DegenerateInputError("cannot align a zero-variance row")
    n = S_truth.shape[0]
    corr = np.corrcoef(S_hat, S_truth)[:n, n:]
    perm = best_permutation(np.abs(corr))
    matched = S_hat[list(perm)]
    scales = np.einsum("ij,ij->i", S_truth, matched) / np.einsum("ij,ij->i", matched, matched)
    return Alignment(permutation=perm, scales=scales)


def _db(signal_energy, error_energy):
    if error_energy <= signal_energy * 10 ** (-SDR_CAP_DB / 10):
        return SDR_CAP_DB
    return 10.0 * math.log10(signal_energy / error_energy)


def sdr(S_hat, S_truth):
    """Per-source SDR in dB after permutation alignment, and their mean.

    The target is the projection of each estimate onto its truth row and
    everything else counts as error, so any nonzero gain is forgiven.
    Perfect matches are capped at +100 dB.
    """
    alignment = align(S_hat, S_truth)
    S_hat = np.asarray(S_hat, dtype=np.float64)[list(alignment.permutation)]
    S_truth = np.asarray(S_truth, dtype=np.float64)
    scores = np.empty(S_truth.shape[0])
    for j, (est, ref) in enumerate(zip(S_hat, S_truth)):
        target = (est @ ref) / (ref @ ref) * ref
        error = est - target
        scores[j] = _db(target @ target, error @ error)
    return scores, float(scores.mean())


def _unit_rows(M):
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def cosine_distance(W_effective, A, align_rows=True):
    """``1 - <W, A^-1>_F / (|W|_F |A^-1|_F)`` on row-normalised matrices.

    With ``align_rows`` the rows of ``W_effective`` are first permuted and
    sign-flipped to best match ``A^-1``, absorbing ICA's ambiguities.
    """
    W = np.asarray(W_effective, dtype=np.float64)
    try:
        target = np.linalg.inv(np.asarray(A, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise NumericError("mixing matrix is singular") from exc
    W = _unit_rows(W)
    target = _unit_rows(target)
    if align_rows:
        cos = W @ target.T
        perm = list(best_permutation(np.abs(cos)))
        signs = np.sign(cos[perm, np.arange(W.shape[0])])
        signs[signs == 0] = 1.0
        W = W[perm] * signs[:, None]
    similarity = np.sum(W * target) / (np.linalg.norm(W) * np.linalg.norm(target))
    return float(1.0 - similarity)


def summarize(values):
    """Mean with a normal-approximation 95% confidence interval."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ParameterError("cannot summarize an empty list")
    mean = float(values.mean())
    if values.size == 1:
        return ScoreSummary(mean, mean, mean, 1)
    half = Z_95 * values.std(ddof=1) / math.sqrt(values.size)
    return ScoreSummary(mean, mean - half, mean + half, int(values.size))
