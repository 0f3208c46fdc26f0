"""Exact maximisation of a scan statistic over subsets of nodes.

With one p-value per node, a node's priority at threshold ``alpha`` is 1 if its
p-value is at or below ``alpha`` and 0 otherwise. By the linear-time subset
scanning property the best subset is therefore a prefix of the nodes sorted by
ascending p-value, and it suffices to score the K prefixes

    S_(k) = k smallest p-values below alpha_max,   alpha_k = max p in S_(k)

at ``scorer(alpha_k, k, k)``. :func:`brute_force_scan` enumerates all ``2^J - 1``
subsets instead and is kept as a test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from subscan.npss import SCORERS, get_scorer
from subscan.pvalues import PValueVector

# Scores within this relative distance of the maximum count as tied; the
# smallest subset wins. Keeps tie-breaking stable under last-ulp differences.
TIE_RTOL = 1e-12

BRUTE_FORCE_MAX_NODES = 20


@dataclass(frozen=True)
class ScanConfig:
    alpha_max: float = 0.5
    scorer: str = "bj"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_max <= 1.0:
            raise ValueError(f"alpha_max must lie in (0, 1], got {self.alpha_max}")
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}; choose from {sorted(SCORERS)}")


@dataclass(frozen=True)
class ScanResult:
    """Best subset for one sample.

    Attributes:
        score: F(S*), 0 when no p-value falls below alpha_max.
        subset: node indices of S*, ascending.
        alpha_star: threshold attaining the score, None for an empty subset.
        k_star: size of S*.
    """

    score: float
    subset: tuple[int, ...]
    alpha_star: float | None
    k_star: int

    @classmethod
    def empty(cls) -> ScanResult:
        return cls(0.0, (), None, 0)

    def to_dict(self, include_subset: bool = True) -> dict:
        out = {"score": self.score, "k_star": self.k_star, "alpha_star": self.alpha_star}
        if include_subset:
            out["subset"] = list(self.subset)
        return out


def _pvalues(pvec: PValueVector | np.ndarray) -> np.ndarray:
    values = pvec.values if isinstance(pvec, PValueVector) else pvec
    return np.asarray(values, dtype=np.float64).ravel()


def _sort_keys(pvec, idx: np.ndarray, kept: np.ndarray) -> np.ndarray:
    # p = count / (M + 1) orders exactly like count; small ints get a radix sort
    counts = getattr(pvec, "counts", None)
    if counts is None:
        return kept
    counts = np.asarray(counts)[idx]
    return counts.astype(np.uint16) if pvec.m_background < np.iinfo(np.uint16).max else counts


def _first_max(scores: np.ndarray) -> int:
    best = scores.max()
    return int(np.argmax(scores >= best - TIE_RTOL * max(1.0, abs(best))))


def filter_by_alpha_max(
    pvec: PValueVector | np.ndarray, alpha_max: float
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and p-values of the entries strictly below ``alpha_max``."""
    p = _pvalues(pvec)
    idx = np.flatnonzero(p < alpha_max)
    return idx, p[idx]


def scan_sample(pvec: PValueVector | np.ndarray, config: ScanConfig = ScanConfig()) -> ScanResult:
    """Highest-scoring subset of nodes for one sample in O(J log J)."""
    idx, kept = filter_by_alpha_max(pvec, config.alpha_max)
    if idx.size == 0:
        return ScanResult.empty()
    # stable sort: equal p-values keep ascending node order
    order = np.argsort(_sort_keys(pvec, idx, kept), kind="stable")
    alphas = kept[order]
    nodes = idx[order]
    k = np.arange(1, alphas.size + 1)
    scores = get_scorer(config.scorer)(alphas, k, k)
    best = _first_max(scores)
    subset = tuple(int(j) for j in np.sort(nodes[: best + 1]))
    return ScanResult(float(scores[best]), subset, float(alphas[best]), best + 1)


@lru_cache(maxsize=None)
def _all_subsets(n_nodes: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    # ordered by size, then lexicographically, which is the tie-break order
    combos = [
        c for size in range(1, n_nodes + 1) for c in itertools.combinations(range(n_nodes), size)
    ]
    masks = np.zeros((len(combos), n_nodes), dtype=bool)
    for row, c in enumerate(combos):
        masks[row, list(c)] = True
    masks.setflags(write=False)
    return masks, combos


def brute_force_scan(
    pvec: PValueVector | np.ndarray, config: ScanConfig = ScanConfig()
) -> ScanResult:
    """Exhaustive search over every nonempty subset of nodes.

    Each subset S is scored at every threshold drawn from its own p-values
    below ``alpha_max``, counting ``n_alpha = #{p in S : p <= alpha}``.
    """
    p = _pvalues(pvec)
    n_nodes = p.size
    if n_nodes > BRUTE_FORCE_MAX_NODES:
        raise ValueError(
            f"brute force is limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n_nodes}"
        )
    if n_nodes == 0:
        return ScanResult.empty()
    eligible = p < config.alpha_max
    if not eligible.any():
        return ScanResult.empty()

    masks, combos = _all_subsets(n_nodes)
    at_or_below = (p[:, None] <= p[None, :]).astype(np.int64)
    n_alpha = masks.astype(np.int64) @ at_or_below  # [subset, threshold node]
    n = np.broadcast_to(masks.sum(axis=1, keepdims=True), n_alpha.shape)
    candidate = masks & eligible[None, :]
    alpha = np.broadcast_to(np.where(eligible, p, 0.5), n_alpha.shape)

    scores = get_scorer(config.scorer)(alpha, n_alpha, n)
    scores = np.where(candidate, scores, -np.inf)
    per_subset = scores.max(axis=1)

    row = _first_max(per_subset)
    thresholds = scores[row]
    tied = thresholds >= per_subset[row] - TIE_RTOL * max(1.0, abs(per_subset[row]))
    alpha_star = float(p[tied].max())
    subset = combos[row]
    return ScanResult(float(per_subset[row]), subset, alpha_star, len(subset))
