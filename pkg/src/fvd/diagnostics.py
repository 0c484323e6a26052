"""Lineage/death statistics and sample-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import rankdata


@dataclass(frozen=True)
class DeathStats:
    mean_death_rate: float
    final_distinct_lineages: int
    mean_killed_rank: float
    frac_killed_rank_above: dict[float, float]


def distinct_lineages(lineage_ids) -> int:
    """Number of unique originating draws represented in the population."""
    ids = np.asarray(lineage_ids)
    if ids.size == 0:
        raise ValueError("empty population")
    return int(np.unique(ids).size)


def killed_reward_ranks(rewards, death_mask) -> np.ndarray:
    """Normalized ascending reward ranks (mid-rank ties, ``K - 1`` denominator) of the killed."""
    r = np.asarray(rewards, dtype=np.float64)
    mask = np.asarray(death_mask, dtype=bool)
    if r.size < 2:
        raise ValueError("need at least two particles to rank")
    if mask.shape != r.shape:
        raise ValueError("death_mask and rewards must have equal length")
    ranks = (rankdata(r, method="average") - 1.0) / (r.size - 1)
    return ranks[mask]


def death_stats(events, final_lineage_ids, thresholds=(0.7,)) -> DeathStats:
    if len(events) == 0:
        return DeathStats(0.0, distinct_lineages(final_lineage_ids), float("nan"),
                          {th: float("nan") for th in thresholds})
    rates = [ev.alpha_t for ev in events]
    ranks = np.concatenate([ev.killed_ranks for ev in events])
    if ranks.size:
        mean_rank = float(ranks.mean())
        above = {th: float(np.mean(ranks > th)) for th in thresholds}
    else:
        mean_rank = float("nan")
        above = {th: float("nan") for th in thresholds}
    return DeathStats(
        mean_death_rate=float(np.mean(rates)),
        final_distinct_lineages=distinct_lineages(final_lineage_ids),
        mean_killed_rank=mean_rank,
        frac_killed_rank_above=above,
    )


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def median_bandwidth(a, b) -> float:
    pooled = np.concatenate([_as_2d(a), _as_2d(b)])
    d = pdist(pooled)
    med = float(np.median(d[d > 0])) if np.any(d > 0) else 1.0
    return med


def mmd_rbf(samples_a, samples_b, bandwidth: float | str = "median") -> float:
    """Unbiased squared MMD with ``k(x, y) = exp(-|x - y|^2 / (2 h^2))``.

    ``bandwidth="median"`` uses the median pairwise distance of the pooled
    sample. The unbiased estimate can be slightly negative.
    """
    x, y = _as_2d(samples_a), _as_2d(samples_b)
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("need at least two samples per set")
    if x.shape[1] != y.shape[1]:
        raise ValueError("sample sets differ in dimension")
    h = median_bandwidth(x, y) if bandwidth == "median" else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    gamma = 0.5 / h**2
    m, n = x.shape[0], y.shape[0]
    kxx = np.exp(-gamma * cdist(x, x, "sqeuclidean"))
    kyy = np.exp(-gamma * cdist(y, y, "sqeuclidean"))
    kxy = np.exp(-gamma * cdist(x, y, "sqeuclidean"))
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * kxy.mean())


def mmd_rbf_biased(samples_a, samples_b, bandwidth: float | str = "median") -> float:
    x, y = _as_2d(samples_a), _as_2d(samples_b)
    h = median_bandwidth(x, y) if bandwidth == "median" else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    gamma = 0.5 / h**2
    k = lambda p, q: np.exp(-gamma * cdist(p, q, "sqeuclidean")).mean()  # noqa: E731
    return float(k(x, x) + k(y, y) - 2.0 * k(x, y))


def pairwise_diversity(samples, chunk: int = 2048) -> float:
    """Mean Euclidean distance over unordered pairs.

    Stand-in for the undefined "Div" column; 1D inputs use the sorted-order
    identity, higher dimensions are chunked to bound memory.
    """
    x = _as_2d(samples)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    n_pairs = n * (n - 1) / 2
    if x.shape[1] == 1:
        xs = np.sort(x[:, 0])
        coef = 2.0 * np.arange(n) - (n - 1)
        return float(np.dot(coef, xs) / n_pairs)
    total = 0.0
    for start in range(0, n, chunk):
        block = x[start:start + chunk]
        d = cdist(block, x[start:])
        # keep only pairs (i, j) with j > i
        total += np.triu(d, k=1).sum()
    return float(total / n_pairs)
