"""Selection strategies: each one picks the next batch of ids to label.

Every strategy is deterministic given its context (including the seed) and
draws only from the unlabeled pool. Ties always break by ascending example id,
so selections are reproducible across platforms. Candidates are ranked over
the unlabeled pool in ascending-id order, which also makes the score-based
strategies invariant to pool ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from algen.backend import Generation
from algen.corpus import PoolState
from algen.geometry import EmbeddingSet, mean_distances_within, pairwise_distances
from algen.metrics import bleu_variance, tokenize

STRATEGY_NAMES = ("random", "coreset", "idds", "mte", "mc_dropout", "oracle")


@dataclass
class StrategyParams:
    idds_lambda: float = 0.5
    mc_samples: int = 10
    knn_k: int = 10

    def __post_init__(self):
        if not 0.0 <= self.idds_lambda <= 1.0:
            raise ValueError("idds_lambda must be in [0, 1]")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be >= 2")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")


@dataclass
class SelectionContext:
    """Everything a strategy may consume; the harness populates only the
    fields the chosen strategy declares it needs."""

    pool: PoolState
    rng_seed: int
    strategy_params: StrategyParams = field(default_factory=StrategyParams)
    embeddings: EmbeddingSet | None = None
    unlabeled_generations: dict[str, Generation] | None = None
    stochastic_samples: dict[str, list[Generation]] | None = None
    per_example_eval: dict[str, float] | None = None
    variance_bleu_order: int = 4


@dataclass
class SelectedBatch:
    ids: list[str]
    scores: dict[str, float] | None = None


# Context fields and backend capabilities each strategy requires, on top of
# the finetune/generate pair every run needs.
CONTEXT_NEEDS = {
    "random": (),
    "coreset": ("embeddings",),
    "idds": ("embeddings",),
    "mte": ("unlabeled_generations",),
    "mc_dropout": ("stochastic_samples",),
    "oracle": ("per_example_eval",),
}

CAPABILITY_NEEDS = {
    "random": (),
    "coreset": ("embed",),
    "idds": ("embed",),
    "mte": ("generate",),
    "mc_dropout": ("stochastic_generate",),
    "oracle": ("generate",),
}


def _sorted_unlabeled(ctx: SelectionContext) -> list[str]:
    if not ctx.pool.unlabeled:
        raise ValueError("unlabeled pool is empty")
    return sorted(ctx.pool.unlabeled)


def _top_by_score(scores: dict[str, float], n: int, lowest: bool = False) -> list[str]:
    sign = 1.0 if lowest else -1.0
    ranked = sorted(scores.items(), key=lambda item: (sign * item[1], item[0]))
    return [example_id for example_id, _ in ranked[:n]]


def random_select(ctx: SelectionContext, n: int) -> SelectedBatch:
    """Uniform sample without replacement from the unlabeled pool."""
    ids = _sorted_unlabeled(ctx)
    rng = np.random.Generator(np.random.PCG64(ctx.rng_seed))
    order = rng.permutation(len(ids))
    take = min(n, len(ids))
    return SelectedBatch(ids=[ids[i] for i in order[:take]])


def coreset_greedy(ctx: SelectionContext, n: int) -> SelectedBatch:
    """Greedy k-center: repeatedly pick the unlabeled point farthest from the
    labeled pool plus everything selected so far.

    With an empty labeled pool the process is jump-started by one uniformly
    random seed example, then the standard greedy picks the rest.
    """
    if ctx.embeddings is None:
        raise ValueError("coreset needs embeddings")
    ids = _sorted_unlabeled(ctx)
    emb = ctx.embeddings
    candidates = emb.matrix(ids)
    take = min(n, len(ids))
    selected: list[str] = []
    scores: dict[str, float] = {}
    picked = np.zeros(len(ids), dtype=bool)

    if ctx.pool.labeled:
        min_dist = pairwise_distances(candidates, emb.matrix(list(ctx.pool.labeled))).min(axis=1)
    else:
        rng = np.random.Generator(np.random.PCG64(ctx.rng_seed))
        seed_idx = int(rng.integers(len(ids)))
        picked[seed_idx] = True
        selected.append(ids[seed_idx])
        scores[ids[seed_idx]] = 0.0
        min_dist = pairwise_distances(candidates, candidates[seed_idx : seed_idx + 1])[:, 0]

    while len(selected) < take:
        masked = np.where(picked, -np.inf, min_dist)
        best = int(np.argmax(masked))  # first max = lowest id (ids are sorted)
        picked[best] = True
        selected.append(ids[best])
        scores[ids[best]] = float(min_dist[best])
        new_dist = pairwise_distances(candidates, candidates[best : best + 1])[:, 0]
        min_dist = np.minimum(min_dist, new_dist)
    return SelectedBatch(ids=selected, scores=scores)


def idds_select(ctx: SelectionContext, n: int) -> SelectedBatch:
    """In-domain diversity: favor points far from the labeled pool but in
    dense regions of the unlabeled pool. score = lambda * meanDist(x, L)
    - (1 - lambda) * meanDist(x, U \\ {x}); the labeled term is dropped while
    the labeled pool is empty. The batch is scored in one shot."""
    if ctx.embeddings is None:
        raise ValueError("idds needs embeddings")
    ids = _sorted_unlabeled(ctx)
    if not ctx.pool.labeled and len(ids) < 2:
        raise ValueError("idds with an empty labeled pool needs at least 2 unlabeled points")
    lam = ctx.strategy_params.idds_lambda
    candidates = ctx.embeddings.matrix(ids)
    if len(ids) >= 2:
        mean_unlabeled = mean_distances_within(candidates)
    else:
        mean_unlabeled = np.zeros(1)
    if ctx.pool.labeled:
        mean_labeled = pairwise_distances(
            candidates, ctx.embeddings.matrix(list(ctx.pool.labeled))
        ).mean(axis=1)
        raw = lam * mean_labeled - (1.0 - lam) * mean_unlabeled
    else:
        raw = -(1.0 - lam) * mean_unlabeled
    scores = {example_id: float(s) for example_id, s in zip(ids, raw)}
    return SelectedBatch(ids=_top_by_score(scores, min(n, len(ids))), scores=scores)


def mte_select(ctx: SelectionContext, n: int) -> SelectedBatch:
    """Mean token entropy of the current model's deterministic generation."""
    if ctx.unlabeled_generations is None:
        raise ValueError("mte needs deterministic generations over the unlabeled pool")
    ids = _sorted_unlabeled(ctx)
    scores = {}
    for example_id in ids:
        if example_id not in ctx.unlabeled_generations:
            raise ValueError(f"missing generation for id {example_id!r}")
        entropies = ctx.unlabeled_generations[example_id].token_entropies
        scores[example_id] = sum(entropies) / len(entropies) if entropies else 0.0
    return SelectedBatch(ids=_top_by_score(scores, min(n, len(ids))), scores=scores)


def mc_dropout_select(ctx: SelectionContext, n: int) -> SelectedBatch:
    """BLEU variance across stochastic generations: high disagreement means
    high estimated uncertainty."""
    if ctx.stochastic_samples is None:
        raise ValueError("mc_dropout needs stochastic samples over the unlabeled pool")
    ids = _sorted_unlabeled(ctx)
    scores = {}
    for example_id in ids:
        samples = ctx.stochastic_samples.get(example_id)
        if samples is None or len(samples) < 2:
            raise ValueError(f"id {example_id!r} needs at least 2 stochastic samples")
        tokenized = [tokenize(g.text) for g in samples]
        scores[example_id] = bleu_variance(tokenized, ctx.variance_bleu_order)
    return SelectedBatch(ids=_top_by_score(scores, min(n, len(ids))), scores=scores)


def oracle_select(ctx: SelectionContext, n: int) -> SelectedBatch:
    """Diagnostic strategy: pick the examples the current model scores worst
    on, judged against the ground-truth references."""
    if ctx.per_example_eval is None:
        raise ValueError("oracle needs per-example evaluation scores")
    ids = _sorted_unlabeled(ctx)
    scores = {}
    for example_id in ids:
        if example_id not in ctx.per_example_eval:
            raise ValueError(f"missing evaluation score for id {example_id!r}")
        scores[example_id] = float(ctx.per_example_eval[example_id])
    return SelectedBatch(ids=_top_by_score(scores, min(n, len(ids)), lowest=True), scores=scores)


STRATEGIES = {
    "random": random_select,
    "coreset": coreset_greedy,
    "idds": idds_select,
    "mte": mte_select,
    "mc_dropout": mc_dropout_select,
    "oracle": oracle_select,
}


def run_strategy(name: str, ctx: SelectionContext, n: int) -> SelectedBatch:
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
    if n < 1:
        raise ValueError("batch size must be >= 1")
    batch = STRATEGIES[name](ctx, n)
    unlabeled = set(ctx.pool.unlabeled)
    assert len(set(batch.ids)) == len(batch.ids), "strategy returned duplicate ids"
    assert all(i in unlabeled for i in batch.ids), "strategy selected outside the pool"
    assert len(batch.ids) == min(n, len(unlabeled))
    return batch
