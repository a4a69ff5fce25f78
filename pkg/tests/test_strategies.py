"""Strategy tests: brute-force k-center oracle, hand-built rankings,
determinism, and pool-order invariance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from algen.backend import Generation
from algen.corpus import DatasetSplit, Example, PoolState
from algen.geometry import EmbeddingSet
from algen.strategies import (
    STRATEGIES,
    SelectionContext,
    StrategyParams,
    run_strategy,
)


def make_pool(unlabeled, labeled=()):
    all_ids = list(unlabeled) + list(labeled)
    split = DatasetSplit(
        name="train",
        examples=[Example(id=i, input=f"in {i}", references=(f"ref {i}",)) for i in all_ids],
    )
    return PoolState(unlabeled=list(unlabeled), labeled=list(labeled), source=split)


def emb_from_array(ids, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] != len(ids):
        points = points.T
    return EmbeddingSet(dim=points.shape[1], vectors={i: points[k] for k, i in enumerate(ids)})


def ctx_with_embeddings(unlabeled, labeled, points_by_id, seed=0, params=None):
    ids = list(points_by_id)
    emb = EmbeddingSet(
        dim=len(np.atleast_1d(points_by_id[ids[0]])),
        vectors={i: np.atleast_1d(np.asarray(v, dtype=float)) for i, v in points_by_id.items()},
    )
    return SelectionContext(
        pool=make_pool(unlabeled, labeled),
        rng_seed=seed,
        strategy_params=params or StrategyParams(),
        embeddings=emb,
    )


# --- brute-force k-center greedy oracle (quadratic, pure python) ---

def oracle_kcenter(points, labeled, unlabeled, n):
    def dist(a, b):
        s = 0.0
        for x, y in zip(points[a], points[b]):
            d = x - y
            s += d * d
        return math.sqrt(s)

    anchors = list(labeled)
    remaining = sorted(unlabeled)
    selected = []
    for _ in range(min(n, len(remaining))):
        best_id, best_val = None, -math.inf
        for cand in remaining:  # ascending id; strict > keeps the lowest id on ties
            val = min(dist(cand, a) for a in anchors + selected)
            if val > best_val:
                best_id, best_val = cand, val
        selected.append(best_id)
        remaining.remove(best_id)
    return selected


def random_instance(rng, integer_coords):
    dim = int(rng.integers(1, 9))
    n_unlabeled = int(rng.integers(3, 51))
    n_labeled = int(rng.integers(1, 6))
    total = n_unlabeled + n_labeled
    if integer_coords:
        coords = rng.integers(-8, 9, size=(total, dim)).astype(float)
    else:
        coords = rng.standard_normal((total, dim))
    unlabeled = [f"u{i:03d}" for i in range(n_unlabeled)]
    labeled = [f"l{i:03d}" for i in range(n_labeled)]
    points = {ids: coords[k] for k, ids in enumerate(unlabeled + labeled)}
    n = int(rng.integers(1, min(10, n_unlabeled) + 1))
    return points, labeled, unlabeled, n


# --- random ---

def test_random_exhaustive_sample_is_shuffle():
    ctx = SelectionContext(pool=make_pool(["a", "b", "c"]), rng_seed=5)
    batch = run_strategy("random", ctx, 3)
    assert sorted(batch.ids) == ["a", "b", "c"]


def test_random_deterministic_per_seed():
    pool_ids = [f"x{i}" for i in range(30)]
    a = run_strategy("random", SelectionContext(pool=make_pool(pool_ids), rng_seed=9), 10)
    b = run_strategy("random", SelectionContext(pool=make_pool(pool_ids), rng_seed=9), 10)
    c = run_strategy("random", SelectionContext(pool=make_pool(pool_ids), rng_seed=10), 10)
    assert a.ids == b.ids
    assert a.ids != c.ids


def test_random_singleton():
    ctx = SelectionContext(pool=make_pool(["a"]), rng_seed=0)
    assert run_strategy("random", ctx, 1).ids == ["a"]


def test_random_empty_pool_errors():
    ctx = SelectionContext(pool=make_pool([]), rng_seed=0)
    with pytest.raises(ValueError):
        run_strategy("random", ctx, 1)


def test_random_invariant_to_pool_order():
    pool_ids = [f"x{i}" for i in range(20)]
    a = run_strategy("random", SelectionContext(pool=make_pool(pool_ids), rng_seed=3), 7)
    b = run_strategy(
        "random", SelectionContext(pool=make_pool(list(reversed(pool_ids))), rng_seed=3), 7
    )
    assert a.ids == b.ids


# --- coreset ---

def test_coreset_hand_case_1d():
    ctx = ctx_with_embeddings(
        ["u1", "u4", "u9"], ["l0"], {"u1": [1.0], "u4": [4.0], "u9": [9.0], "l0": [0.0]}
    )
    batch = run_strategy("coreset", ctx, 2)
    assert batch.ids == ["u9", "u4"]


def test_coreset_empty_pool_seed_only():
    ctx = ctx_with_embeddings(["u1", "u2"], [], {"u1": [1.0], "u2": [2.0]}, seed=11)
    batch = run_strategy("coreset", ctx, 1)
    assert len(batch.ids) == 1


def test_coreset_coincident_points_tie_by_id():
    ids = [f"u{i}" for i in range(5)]
    ctx = ctx_with_embeddings(ids, ["l0"], {**{i: [2.0] for i in ids}, "l0": [2.0]})
    batch = run_strategy("coreset", ctx, 3)
    assert batch.ids == ["u0", "u1", "u2"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_coreset_matches_bruteforce_oracle(seed, integer_coords):
    rng = np.random.default_rng(seed)
    points, labeled, unlabeled, n = random_instance(rng, integer_coords)
    ctx = ctx_with_embeddings(unlabeled, labeled, points)
    got = run_strategy("coreset", ctx, n)
    want = oracle_kcenter(points, labeled, unlabeled, n)
    assert got.ids == want


def test_coreset_empty_pool_matches_oracle_after_seed():
    rng = np.random.default_rng(123)
    points, _, unlabeled, n = random_instance(rng, integer_coords=True)
    ctx = ctx_with_embeddings(unlabeled, [], points, seed=77)
    got = run_strategy("coreset", ctx, n)
    seed_id = got.ids[0]
    rest = oracle_kcenter(points, [seed_id], [u for u in unlabeled if u != seed_id], n - 1)
    assert got.ids == [seed_id] + rest


# --- idds ---

def test_idds_hand_case_density_seeking():
    ctx = ctx_with_embeddings(["u0", "u1", "u10"], [], {"u0": [0.0], "u1": [1.0], "u10": [10.0]})
    batch = run_strategy("idds", ctx, 1)
    assert batch.ids == ["u1"]
    assert batch.scores["u1"] == pytest.approx(-0.5 * 5.0)


def test_idds_lambda_zero_is_pure_density():
    points = {"u0": [0.0], "u1": [1.0], "u9": [9.0], "l0": [9.0]}
    params = StrategyParams(idds_lambda=0.0)
    batch = run_strategy(
        "idds", ctx_with_embeddings(["u0", "u1", "u9"], ["l0"], points, params=params), 1
    )
    # u9 sits on the labeled point, but lambda=0 ignores the labeled pool
    assert batch.ids == ["u1"]


def test_idds_outlier_ranked_last():
    points = {"u0": [0.0], "u1": [0.1], "u2": [0.2], "u3": [0.3], "far": [50.0]}
    for lam in (0.0, 0.3, 0.7, 0.99):
        ctx = ctx_with_embeddings(list(points), [], points, params=StrategyParams(idds_lambda=lam))
        batch = run_strategy("idds", ctx, len(points))
        assert batch.ids[-1] == "far"


def test_idds_empty_pool_needs_two_points():
    ctx = ctx_with_embeddings(["u0"], [], {"u0": [0.0]})
    with pytest.raises(ValueError):
        run_strategy("idds", ctx, 1)


def test_idds_labeled_term():
    # lambda=1: pure distance from labeled pool, the remote point wins
    points = {"u0": [0.0], "u5": [5.0], "l0": [0.0]}
    params = StrategyParams(idds_lambda=1.0)
    batch = run_strategy("idds", ctx_with_embeddings(["u0", "u5"], ["l0"], points, params=params), 1)
    assert batch.ids == ["u5"]


# --- mte ---

def make_gen(example_id, entropies, text=None):
    if text is None:
        text = "tok " * len(entropies)
    return Generation(example_id=example_id, text=text.strip(), token_entropies=tuple(entropies))


def test_mte_means_rank():
    ctx = SelectionContext(
        pool=make_pool(["x1", "x2"]),
        rng_seed=0,
        unlabeled_generations={"x1": make_gen("x1", [1.0]), "x2": make_gen("x2", [0.1, 0.1])},
    )
    batch = run_strategy("mte", ctx, 1)
    assert batch.ids == ["x1"]
    assert batch.scores == {"x1": 1.0, "x2": pytest.approx(0.1)}


def test_mte_ties_resolve_by_id():
    gens = {i: make_gen(i, [0.5, 0.5]) for i in ["b", "a", "c"]}
    ctx = SelectionContext(pool=make_pool(["b", "a", "c"]), rng_seed=0, unlabeled_generations=gens)
    assert run_strategy("mte", ctx, 2).ids == ["a", "b"]


def test_mte_empty_generation_scores_zero():
    gens = {"a": make_gen("a", [0.2]), "b": make_gen("b", [])}
    ctx = SelectionContext(pool=make_pool(["a", "b"]), rng_seed=0, unlabeled_generations=gens)
    batch = run_strategy("mte", ctx, 2)
    assert batch.ids == ["a", "b"]
    assert batch.scores["b"] == 0.0


def test_mte_missing_generation_errors():
    ctx = SelectionContext(
        pool=make_pool(["a", "b"]), rng_seed=0, unlabeled_generations={"a": make_gen("a", [0.1])}
    )
    with pytest.raises(ValueError, match="missing generation"):
        run_strategy("mte", ctx, 1)


@given(st.sampled_from(["double", "exp", "affine"]))
def test_mte_selection_invariant_under_increasing_transform(name):
    transform = {"double": lambda s: 2 * s, "exp": math.exp, "affine": lambda s: 3 * s + 7}[name]
    base_scores = {"a": 0.3, "b": 1.2, "c": 0.7, "d": 0.05}
    gens = {i: make_gen(i, [s]) for i, s in base_scores.items()}
    tgens = {i: make_gen(i, [transform(s)]) for i, s in base_scores.items()}
    pool = make_pool(list(base_scores))
    before = run_strategy("mte", SelectionContext(pool=pool, rng_seed=0, unlabeled_generations=gens), 2)
    after = run_strategy("mte", SelectionContext(pool=pool, rng_seed=0, unlabeled_generations=tgens), 2)
    assert set(before.ids) == set(after.ids)


# --- mc dropout ---

def test_mc_dropout_prefers_disagreement():
    samples = {
        "varied": [make_gen("varied", [0.1], "aa bb"), make_gen("varied", [0.1], "cc dd")],
        "stable": [make_gen("stable", [0.1], "ee ff"), make_gen("stable", [0.1], "ee ff")],
    }
    ctx = SelectionContext(pool=make_pool(["varied", "stable"]), rng_seed=0, stochastic_samples=samples)
    batch = run_strategy("mc_dropout", ctx, 1)
    assert batch.ids == ["varied"]
    assert batch.scores["varied"] == 1.0
    assert batch.scores["stable"] == 0.0


def test_mc_dropout_all_identical_ties_by_id():
    samples = {i: [make_gen(i, [0.1], "zz yy")] * 3 for i in ["c", "a", "b"]}
    ctx = SelectionContext(pool=make_pool(["c", "a", "b"]), rng_seed=0, stochastic_samples=samples)
    assert run_strategy("mc_dropout", ctx, 2).ids == ["a", "b"]


def test_mc_dropout_requires_two_samples():
    samples = {"a": [make_gen("a", [0.1], "x y")]}
    ctx = SelectionContext(pool=make_pool(["a"]), rng_seed=0, stochastic_samples=samples)
    with pytest.raises(ValueError, match="at least 2"):
        run_strategy("mc_dropout", ctx, 1)


# --- oracle ---

def test_oracle_argmin():
    ctx = SelectionContext(
        pool=make_pool(["a", "b", "c"]),
        rng_seed=0,
        per_example_eval={"a": 0.9, "b": 0.1, "c": 0.5},
    )
    assert run_strategy("oracle", ctx, 1).ids == ["b"]
    assert run_strategy("oracle", ctx, 3).ids == ["b", "c", "a"]


def test_oracle_ties_by_id():
    ctx = SelectionContext(
        pool=make_pool(["c", "a", "b"]), rng_seed=0, per_example_eval={"a": 0.5, "b": 0.5, "c": 0.5}
    )
    assert run_strategy("oracle", ctx, 2).ids == ["a", "b"]


def test_oracle_missing_score_errors():
    ctx = SelectionContext(pool=make_pool(["a", "b"]), rng_seed=0, per_example_eval={"a": 0.5})
    with pytest.raises(ValueError, match="missing evaluation score"):
        run_strategy("oracle", ctx, 1)


# --- cross-strategy invariants ---

def _full_context(unlabeled, labeled, seed=0):
    # data is generated in sorted-id order so two contexts differing only in
    # pool ordering carry identical per-id values
    rng = np.random.default_rng(seed)
    points, gens, samples, evals = {}, {}, {}, {}
    for i in sorted(unlabeled) + sorted(labeled):
        points[i] = rng.standard_normal(3)
    for i in sorted(unlabeled):
        gens[i] = make_gen(i, [float(rng.random())])
        samples[i] = [
            make_gen(i, [0.1], f"t{rng.integers(5)} s{rng.integers(5)}") for _ in range(3)
        ]
        evals[i] = float(rng.random())
    emb = EmbeddingSet(dim=3, vectors=points)
    return SelectionContext(
        pool=make_pool(unlabeled, labeled),
        rng_seed=seed,
        embeddings=emb,
        unlabeled_generations=gens,
        stochastic_samples=samples,
        per_example_eval=evals,
    )


@pytest.mark.parametrize("name", sorted(STRATEGIES))
@pytest.mark.parametrize("n", [1, 4, 10, 25])
def test_every_strategy_returns_distinct_pool_ids_of_right_size(name, n):
    unlabeled = [f"u{i:02d}" for i in range(12)]
    ctx = _full_context(unlabeled, ["l0", "l1"], seed=n)
    batch = run_strategy(name, ctx, n)
    assert len(batch.ids) == min(n, len(unlabeled))
    assert len(set(batch.ids)) == len(batch.ids)
    assert set(batch.ids) <= set(unlabeled)


@pytest.mark.parametrize("name", sorted(STRATEGIES))
def test_every_strategy_deterministic_and_order_invariant(name):
    unlabeled = [f"u{i:02d}" for i in range(15)]
    ctx1 = _full_context(unlabeled, ["l0"], seed=3)
    ctx2 = _full_context(list(reversed(unlabeled)), ["l0"], seed=3)
    a = run_strategy(name, ctx1, 5)
    b = run_strategy(name, ctx1, 5)
    c = run_strategy(name, ctx2, 5)
    assert a.ids == b.ids
    assert a.ids == c.ids
