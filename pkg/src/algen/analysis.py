"""Post-hoc analyses of selected batches and cross-run statistics.

Batch characteristics (outlier score, diversity) compare strategies at the
first AL iteration; the significance machinery compares each strategy to the
random baseline over aligned (iteration, repetition) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from algen.geometry import EmbeddingSet, pairwise_distances


@dataclass
class PairedSeries:
    """Aligned metric values over (iteration, repetition) cells."""

    strategy_values: list[float]
    baseline_values: list[float]

    def __post_init__(self):
        if len(self.strategy_values) != len(self.baseline_values):
            raise ValueError("paired series must have equal lengths")


@dataclass
class WilcoxonResult:
    p_value: float
    statistic: float  # sum of positive-difference ranks
    n_effective: int
    zeros_discarded: int
    degenerate: bool
    method: str


@dataclass
class GainPoint:
    iteration: int
    repetition: int
    value: float | None  # None marks an undefined point (zero random gain)


def batch_outlier_score(batch: list[str], pool_embeddings: EmbeddingSet, k: int = 10) -> float:
    """Mean over the batch of each member's mean distance to its k nearest
    unlabeled neighbors. Higher means more outlier-prone selections."""
    if not batch:
        raise ValueError("batch must be nonempty")
    pool_ids = pool_embeddings.ids()
    if len(pool_ids) <= k:
        raise ValueError(f"pool must have more than k={k} points")
    pool_matrix = pool_embeddings.matrix(pool_ids)
    position = {example_id: i for i, example_id in enumerate(pool_ids)}
    dists = pairwise_distances(pool_embeddings.matrix(batch), pool_matrix)
    total = 0.0
    for row, example_id in enumerate(batch):
        d = dists[row]
        if example_id in position:
            d = np.delete(d, position[example_id])
        if len(d) < k:
            raise ValueError(f"fewer than k={k} neighbors for {example_id!r}")
        nearest = np.partition(d, k - 1)[:k]
        total += float(nearest.mean())
    return total / len(batch)


def batch_diversity(batch: list[str], embeddings: EmbeddingSet) -> float:
    """Mean Euclidean distance of batch members from the batch centroid."""
    if not batch:
        raise ValueError("batch must be nonempty")
    points = embeddings.matrix(batch)
    center = points.mean(axis=0)
    return float(np.sqrt(((points - center) ** 2).sum(axis=1)).mean())


def relative_selection_performance(
    batch_scores: dict[str, float], pool_scores: dict[str, float]
) -> float:
    """Difference between the batch's mean per-example score and the pool's,
    in units of the pool's population standard deviation."""
    if not set(batch_scores) <= set(pool_scores):
        raise ValueError("batch ids must be a subset of pool ids")
    if len(pool_scores) < 2:
        raise ValueError("pool must have at least 2 scored examples")
    pool = np.asarray(list(pool_scores.values()), dtype=float)
    std = float(pool.std())  # population std: the pool is the whole population
    if std == 0.0:
        raise ValueError("degenerate pool: zero score variance")
    batch_mean = float(np.mean(list(batch_scores.values())))
    return (batch_mean - float(pool.mean())) / std


def relative_gains(
    strategy_values: dict[tuple[int, int], float],
    random_values: dict[tuple[int, int], float],
    zero_shot: dict[int, float] | float,
) -> list[GainPoint]:
    """Per (iteration, repetition): percent change of the strategy's gain over
    random selection's gain, both measured against zero-shot performance.

    Points where the random gain is exactly zero are emitted with value None
    and must be excluded from summaries.
    """
    if set(strategy_values) != set(random_values):
        raise ValueError("strategy and random series must cover the same (iteration, repetition) cells")
    points = []
    for iteration, repetition in sorted(strategy_values):
        z = zero_shot[repetition] if isinstance(zero_shot, dict) else float(zero_shot)
        gain_s = strategy_values[(iteration, repetition)] - z
        gain_r = random_values[(iteration, repetition)] - z
        if gain_r == 0.0:
            points.append(GainPoint(iteration, repetition, None))
        else:
            points.append(GainPoint(iteration, repetition, 100.0 * (gain_s - gain_r) / gain_r))
    return points


def _average_ranks(magnitudes: list[float]) -> list[float]:
    """Ranks of |d| ascending, tied magnitudes sharing their average rank."""
    order = sorted(range(len(magnitudes)), key=lambda i: magnitudes[i])
    ranks = [0.0] * len(magnitudes)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # ranks are 1-based
        for idx in order[i : j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


def _exact_sign_distribution(doubled_ranks: list[int]) -> list[int]:
    """Counts of each achievable doubled rank-sum over all sign assignments."""
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        nxt = counts[:]
        for s in range(total - r + 1):
            if counts[s]:
                nxt[s + r] += counts[s]
        counts = nxt
    return counts


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(
    pairs: PairedSeries, alternative: str = "two-sided", exact_threshold: int = 25
) -> WilcoxonResult:
    """Wilcoxon signed-rank test on strategy-minus-baseline differences.

    Zero differences are discarded before ranking (and counted); tied
    magnitudes get average ranks. The null distribution is computed exactly by
    sign enumeration when the effective n is at most `exact_threshold`,
    otherwise by normal approximation with tie and continuity corrections.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    diffs = [s - b for s, b in zip(pairs.strategy_values, pairs.baseline_values)]
    if not diffs:
        raise ValueError("no pairs to test")
    nonzero = [d for d in diffs if d != 0.0]
    zeros = len(diffs) - len(nonzero)
    if not nonzero:
        return WilcoxonResult(1.0, 0.0, 0, zeros, True, "degenerate")

    n = len(nonzero)
    ranks = _average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)

    if n <= exact_threshold:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_sign_distribution(doubled)
        total = 2**n
        w2 = int(round(2 * w_plus))
        p_le = sum(counts[: w2 + 1]) / total
        p_ge = sum(counts[w2:]) / total
        method = "exact"
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        # tie correction: group sizes over tied |d| magnitudes
        seen: dict[float, int] = {}
        for d in nonzero:
            seen[abs(d)] = seen.get(abs(d), 0) + 1
        var -= sum(t**3 - t for t in seen.values()) / 48.0
        if var <= 0:
            return WilcoxonResult(1.0, w_plus, n, zeros, True, "degenerate")
        sigma = math.sqrt(var)
        # continuity correction of 0.5 toward the mean
        p_le = _normal_cdf((w_plus - mu + 0.5) / sigma)
        p_ge = 1.0 - _normal_cdf((w_plus - mu - 0.5) / sigma)
        method = "normal"

    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2.0 * min(p_le, p_ge))
    return WilcoxonResult(min(1.0, max(0.0, p)), w_plus, n, zeros, False, method)


def bonferroni(p: float, m: int) -> float:
    """Family-wise correction: multiply by the number of hypotheses, cap at 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(1.0, p * m)


def bootstrap_ci(
    values: list[float], level: float = 0.95, resamples: int = 10000, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for the mean."""
    if not values:
        raise ValueError("values must be nonempty")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    arr = np.asarray(values, dtype=float)
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.integers(0, len(arr), size=(resamples, len(arr)))
    means = arr[draws].mean(axis=1)
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail])
    return float(low), float(high)
