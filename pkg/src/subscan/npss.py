"""Nonparametric scan statistics evaluated at ``(alpha, n_alpha, n)``.

``n`` is the number of p-values in a subset and ``n_alpha`` the number of them
at or below the significance threshold ``alpha``. Both scorers are one-sided:
they return 0 unless the observed proportion ``n_alpha / n`` exceeds ``alpha``.

All functions broadcast over numpy arrays; the LTSS scanner evaluates every
candidate prefix in one call.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import xlogy

Scorer = Callable[..., np.ndarray]


def _check_triple(alpha, n_alpha, n) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    alpha = np.asarray(alpha, dtype=np.float64)
    n_alpha = np.asarray(n_alpha, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if np.any((alpha <= 0) | (alpha >= 1)):
        raise ValueError("alpha must lie strictly between 0 and 1")
    if np.any(n < 1):
        raise ValueError("n must be >= 1")
    if np.any((n_alpha < 0) | (n_alpha > n)):
        raise ValueError("n_alpha must satisfy 0 <= n_alpha <= n")
    return alpha, n_alpha, n


def kl_bernoulli(x, y):
    """KL divergence between Bernoulli(x) and Bernoulli(y), natural log.

    Uses ``0 * log 0 = 0``, so ``x`` may be 0 or 1; ``y`` must be in (0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    if np.any((y <= 0) | (y >= 1)):
        raise ValueError("y must lie strictly between 0 and 1")
    kl = xlogy(x, x / y) + xlogy(1.0 - x, (1.0 - x) / (1.0 - y))
    # rounding can leave tiny negatives when x is close to y
    kl = np.maximum(kl, 0.0)
    return kl[()] if kl.ndim == 0 else kl


def berk_jones(alpha, n_alpha, n):
    """Berk-Jones statistic ``n * KL(n_alpha / n, alpha)``, clamped to 0 below alpha."""
    alpha, n_alpha, n = _check_triple(alpha, n_alpha, n)
    frac = n_alpha / n
    score = np.where(frac > alpha, n * kl_bernoulli(frac, alpha), 0.0)
    return score[()] if score.ndim == 0 else score


def higher_criticism(alpha, n_alpha, n):
    """Higher Criticism ``(n_alpha - n*alpha) / sqrt(n*alpha*(1-alpha))``, clamped to 0."""
    alpha, n_alpha, n = _check_triple(alpha, n_alpha, n)
    excess = n_alpha - n * alpha
    score = np.where(n_alpha / n > alpha, excess / np.sqrt(n * alpha * (1.0 - alpha)), 0.0)
    return score[()] if score.ndim == 0 else score


SCORERS: dict[str, Scorer] = {
    "bj": berk_jones,
    "hc": higher_criticism,
}


def get_scorer(name: str) -> Scorer:
    try:
        return SCORERS[name]
    except KeyError:
        raise ValueError(f"unknown scorer {name!r}; choose from {sorted(SCORERS)}") from None
