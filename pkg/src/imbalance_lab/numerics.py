"""Numeric substrate: normal CDF, seeded streams, Gaussian sampling, class statistics."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy import special

SHRINK_FACTOR = 1e-6
SHRINK_FLOOR = 1e-12


@dataclass(frozen=True)
class ClassStats:
    mean: np.ndarray
    cov: np.ndarray
    prior: float


def std_normal_cdf(x):
    """Pr{N(0,1) <= x}; scalar in, float out, array in, array out.

    Backed by ``scipy.special.ndtr`` (Cody's rational approximations,
    absolute error well below 1e-15 on finite inputs).
    """
    out = special.ndtr(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def log_std_normal_cdf(x):
    out = special.log_ndtr(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def rng_stream(seed: int, *purpose: str) -> np.random.Generator:
    """Independent generator for ``(seed, purpose...)``.

    Streams with different purpose paths never alias; the same path always
    reproduces the same sequence.
    """
    key = tuple(zlib.crc32(p.encode("utf-8")) for p in purpose)
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def substreams(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    return list(rng.spawn(count))


def shrink(cov: np.ndarray, factor: float = SHRINK_FACTOR) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    eps = max(factor * float(np.trace(cov)) / d, SHRINK_FLOOR)
    return cov + eps * np.eye(d)


def _sqrt_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    scale = max(float(np.max(np.abs(cov))), 1.0)
    if np.max(np.abs(cov - cov.T)) > 1e-9 * scale:
        raise ValueError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    # PSD but singular: fall back to the symmetric square root
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-9 * scale:
        raise ValueError("covariance is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_mvn(mean, cov, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rows from N(mean, cov)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    d = mean.shape[0]
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (d, d):
        raise ValueError(f"covariance shape {cov.shape} does not match mean dim {d}")
    if n == 0:
        return np.empty((0, d))
    L = _sqrt_factor(cov)
    z = rng.standard_normal((n, d))
    return mean + z @ L.T


def estimate_class_stats(features: np.ndarray, labels: np.ndarray, n_classes: int | None = None,
                         diagonal: bool = False) -> list[ClassStats]:
    """Per-class proportion, mean and shrunk sample covariance.

    Covariances divide by N_c - 1 (zero matrix for singleton classes) and
    always carry the ``shrink`` ridge. ``diagonal=True`` keeps only the
    variances, for wide feature spaces.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    C = int(y.max()) + 1 if n_classes is None else n_classes
    if y.min() < 0 or y.max() >= C:
        raise ValueError(f"label out of range 0..{C - 1}")
    N, d = X.shape
    stats = []
    for c in range(C):
        Xc = X[y == c]
        if Xc.shape[0] == 0:
            raise ValueError(f"class {c} has no samples")
        mu = Xc.mean(axis=0)
        if Xc.shape[0] >= 2:
            D = Xc - mu
            if diagonal:
                cov = np.diag((D * D).sum(axis=0) / (Xc.shape[0] - 1))
            else:
                cov = D.T @ D / (Xc.shape[0] - 1)
                cov = 0.5 * (cov + cov.T)
        else:
            cov = np.zeros((d, d))
        stats.append(ClassStats(mean=mu, cov=shrink(cov), prior=Xc.shape[0] / N))
    return stats
