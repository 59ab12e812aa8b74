"""Source generation, WAV ingestion and linear mixing.

Rows are sources (or sensors), columns are time samples.  Everything is
stored as float64.
"""

import glob
import os

import numpy as np
from scipy.io import wavfile

from .errors import DegenerateInputError, IngestionError, ParameterError, WavFormatError

SAMPLE_RATE = 16000
MAX_CONDITION = 1e6
FAMILIES = ("am_tone", "sawtooth", "bursts", "laplace")

# Distinct salts keep the source, mixing and W-init streams independent
# even when callers reuse one trial seed for all three.
_SOURCE_SALT = 0x5EED5
_MIXING_SALT = 0xA11CE


def _am_tone(rng, t):
    carrier = rng.uniform(200.0, 2000.0)
    mod = rng.uniform(2.0, 20.0)
    phase, mod_phase = rng.uniform(0.0, 2 * np.pi, size=2)
    envelope = 1.0 + 0.5 * np.sin(2 * np.pi * mod * t + mod_phase)
    return envelope * np.sin(2 * np.pi * carrier * t + phase)


def _sawtooth(rng, t):
    freq = rng.uniform(50.0, 500.0)
    phase = rng.uniform(0.0, 1.0)
    return 2.0 * np.mod(freq * t + phase, 1.0) - 1.0


def _bursts(rng, t):
    # Poisson-timed decaying bursts of Laplacian noise: strongly impulsive.
    m = t.size
    rate = rng.uniform(5.0, 15.0)  # bursts per second
    decay = rng.uniform(0.005, 0.02)  # seconds
    duration = t[-1] + 1.0 / SAMPLE_RATE if m else 0.0
    count = max(1, rng.poisson(rate * max(duration, 1.0 / SAMPLE_RATE)))
    onsets = rng.uniform(0.0, max(duration, 1.0 / SAMPLE_RATE), size=count)
    envelope = np.zeros(m)
    for onset in onsets:
        after = t >= onset
        envelope[after] += np.exp(-(t[after] - onset) / decay)
    return envelope * rng.laplace(size=m) + 0.01 * rng.laplace(size=m)


def _laplace(rng, t):
    return rng.laplace(size=t.size)


_GENERATORS = {
    "am_tone": _am_tone,
    "sawtooth": _sawtooth,
    "bursts": _bursts,
    "laplace": _laplace,
}


def generate_sources(n, m, seed=0, kind="mixed", sample_rate=SAMPLE_RATE):
    """Synthesize ``n`` independent non-Gaussian sources of ``m`` samples.

    ``kind="mixed"`` cycles through :data:`FAMILIES` so that each of the
    first four rows comes from a different waveform family; any single
    family name uses that family for every row with independent parameters.
    Rows are centred and scaled to unit peak.
    """
    if n < 2:
        raise ParameterError(f"need at least 2 sources, got n={n}")
    if m < n:
        raise ParameterError(f"need m >= n samples, got m={m}, n={n}")
    if kind == "mixed":
        families = [FAMILIES[i % len(FAMILIES)] for i in range(n)]
    elif kind in _GENERATORS:
        families = [kind] * n
    else:
        raise ParameterError(f"unknown source kind {kind!r}; choose 'mixed' or one of {FAMILIES}")

    rng = np.random.default_rng([seed, _SOURCE_SALT])
    t = np.arange(m) / float(sample_rate)
    S = np.empty((n, m))
    for i, family in enumerate(families):
        row = _GENERATORS[family](rng, t)
        row = row - row.mean()
        peak = np.abs(row).max()
        if peak == 0.0:
            # Only reachable for pathological tiny m; fall back to noise.
            row = rng.laplace(size=m)
            row -= row.mean()
            peak = np.abs(row).max()
        S[i] = row / peak
    check_sources(S)
    return S


def check_sources(S):
    """Validate the source-matrix invariants; return ``S`` as float64."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise ParameterError(f"sources must be a 2-D matrix, got shape {S.shape}")
    n, m = S.shape
    if n < 2 or m < n:
        raise ParameterError(f"sources need n >= 2 and m >= n, got {S.shape}")
    if np.any(S.var(axis=1) == 0.0):
        raise DegenerateInputError("a source row has zero variance")
    return S


def _read_wav(path):
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample type {data.dtype}")
    return rate, samples


def load_wav_sources(paths):
    """Load equally long mono WAV files as rows of a source matrix.

    Returns ``(S, sample_rate)``.  PCM16 is scaled by 1/32768 so values lie
    in [-1, 1]; float32 files are taken as is.
    """
    paths = list(paths)
    if len(paths) < 2:
        raise ParameterError(f"need at least 2 WAV files, got {len(paths)}")
    rows = []
    rate0 = None
    for path in paths:
        rate, samples = _read_wav(path)
        if rate0 is None:
            rate0 = rate
        elif rate != rate0:
            raise IngestionError(f"{path}: sample rate {rate} differs from {rate0}")
        if rows and samples.size != rows[0].size:
            raise IngestionError(
                f"{path}: length {samples.size} differs from {rows[0].size}"
            )
        rows.append(samples)
    return check_sources(np.vstack(rows)), rate0


def load_wav_dir(directory, pattern="*.wav"):
    """Load every WAV in ``directory`` (sorted by name)."""
    if not os.path.isdir(directory):
        raise IngestionError(f"{directory}: not a directory")
    paths = sorted(glob.glob(os.path.join(directory, pattern)))
    return load_wav_sources(paths)


def generate_mixing_matrix(n, seed=0, max_condition=MAX_CONDITION):
    """Draw an ``n x n`` standard-normal mixing matrix with bounded condition number.

    Draws are repeated from the same seeded stream until
    ``cond(A) <= max_condition``.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    rng = np.random.default_rng([seed, _MIXING_SALT])
    while True:
        A = rng.standard_normal((n, n))
        if np.linalg.cond(A) <= max_condition:
            return A


def mix(A, S):
    """Return ``X = A @ S``."""
    A = np.asarray(A, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if A.ndim != 2 or S.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[1] != S.shape[0]:
        raise ParameterError(f"cannot mix A{A.shape} with S{S.shape}")
    return A @ S
