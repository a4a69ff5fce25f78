"""Geometry primitive tests: hand cases plus invariance properties."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from algen.geometry import (
    EmbeddingSet,
    centroid,
    euclidean,
    knn_mean_distance,
    mean_distances_within,
    min_distance_to_set,
    pairwise_distances,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def emb_1d(values: dict[str, float]) -> EmbeddingSet:
    return EmbeddingSet(dim=1, vectors={k: np.array([v]) for k, v in values.items()})


def test_euclidean_345():
    assert euclidean(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 5.0


def test_euclidean_identity():
    x = np.array([1.5, -2.0, 7.0])
    assert euclidean(x, x) == 0.0


def test_euclidean_1d():
    assert euclidean(np.array([0.0]), np.array([2.0])) == 2.0


def test_euclidean_length_mismatch():
    with pytest.raises(ValueError):
        euclidean(np.array([0.0]), np.array([0.0, 1.0]))


def test_centroid_midpoint():
    assert np.array_equal(centroid([np.array([0.0, 0.0]), np.array([2.0, 0.0])]), [1.0, 0.0])


def test_centroid_singleton():
    x = np.array([4.0, 5.0])
    assert np.array_equal(centroid([x]), x)


def test_centroid_mean():
    points = [np.array([1.0, 1.0]), np.array([3.0, 3.0]), np.array([5.0, 5.0])]
    assert np.array_equal(centroid(points), [3.0, 3.0])


def test_centroid_empty_errors():
    with pytest.raises(ValueError):
        centroid([])


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (3,), elements=finite))
def test_centroid_translation_equivariant(points, shift):
    base = centroid(list(points))
    shifted = centroid([p + shift for p in points])
    assert np.allclose(shifted, base + shift, atol=1e-9)


def test_knn_hand_cases():
    pool = emb_1d({"a": 0.0, "b": 1.0, "c": 3.0})
    assert knn_mean_distance("a", pool, 1) == 1.0
    assert knn_mean_distance("c", pool, 2) == 2.5


def test_knn_coincident_neighbor():
    pool = emb_1d({"x": 2.0, "y": 2.0})
    assert knn_mean_distance("x", pool, 1) == 0.0


def test_knn_too_few_candidates():
    pool = emb_1d({"a": 0.0, "b": 1.0})
    with pytest.raises(ValueError):
        knn_mean_distance("a", pool, 2)


def test_knn_permutation_invariant():
    values = {"a": 0.0, "b": 1.0, "c": 3.0, "d": -2.0}
    pool1 = emb_1d(values)
    pool2 = emb_1d(dict(reversed(values.items())))
    for k in (1, 2, 3):
        assert knn_mean_distance("a", pool1, k) == knn_mean_distance("a", pool2, k)


def test_min_distance_hand_case():
    emb = emb_1d({"x": 1.0, "a": 0.0, "b": 6.0})
    assert min_distance_to_set("x", ["a", "b"], emb) == 1.0


def test_min_distance_self_in_anchors():
    emb = emb_1d({"x": 1.0, "a": 0.0})
    assert min_distance_to_set("x", ["a", "x"], emb) == 0.0


def test_min_distance_single_anchor_is_euclidean():
    emb = emb_1d({"x": 1.0, "a": -4.0})
    assert min_distance_to_set("x", ["a"], emb) == euclidean(emb["x"], emb["a"])


def test_min_distance_empty_anchors():
    emb = emb_1d({"x": 1.0})
    with pytest.raises(ValueError):
        min_distance_to_set("x", [], emb)


@given(st.dictionaries(st.sampled_from("abcdefgh"), finite, min_size=3, max_size=8))
def test_min_distance_union_property(values):
    emb = emb_1d(values)
    ids = sorted(values)
    x = ids[0]
    anchors = ids[1:]
    split = max(1, len(anchors) // 2)
    left, right = anchors[:split], anchors[split:]
    if not right:
        return
    combined = min_distance_to_set(x, anchors, emb)
    assert combined == min(
        min_distance_to_set(x, left, emb), min_distance_to_set(x, right, emb)
    )


def test_embedding_set_validates_shape_and_finiteness():
    with pytest.raises(ValueError):
        EmbeddingSet(dim=2, vectors={"a": np.array([1.0])})
    with pytest.raises(ValueError):
        EmbeddingSet(dim=1, vectors={"a": np.array([np.nan])})


def test_mean_distances_within_matches_direct():
    rng = np.random.default_rng(3)
    points = rng.standard_normal((23, 4))
    got = mean_distances_within(points, chunk=5)
    full = pairwise_distances(points, points)
    want = full.sum(axis=1) / (len(points) - 1)
    assert np.allclose(got, want, atol=1e-12)
