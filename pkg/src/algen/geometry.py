"""Vector-space primitives over example embeddings.

Embeddings are used raw (no normalization) with plain Euclidean distances.
All accumulation happens in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


@dataclass
class EmbeddingSet:
    """Fixed-dimension vectors keyed by example id."""

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        clean = {}
        for key, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise ValueError(f"vector for {key!r} has shape {arr.shape}, want ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"vector for {key!r} has non-finite components")
            clean[key] = arr
        self.vectors = clean

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def __getitem__(self, key: str) -> np.ndarray:
        return self.vectors[key]

    def ids(self) -> list[str]:
        return list(self.vectors)

    def matrix(self, ids: list[str]) -> np.ndarray:
        """Stack vectors for `ids` into an (n, dim) array, in the given order."""
        if not ids:
            return np.empty((0, self.dim))
        return np.stack([self.vectors[i] for i in ids])


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def centroid(vectors: list[np.ndarray]) -> np.ndarray:
    if not vectors:
        raise ValueError("centroid of empty set is undefined")
    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    return stacked.mean(axis=0)


def knn_mean_distance(x: str, pool: EmbeddingSet, k: int) -> float:
    """Mean Euclidean distance from `x` to its k nearest neighbors in `pool`,
    excluding `x` itself (by id; a coincident point under a different id counts)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    others = [i for i in pool.ids() if i != x]
    if len(others) < k:
        raise ValueError(f"need at least {k} candidates besides {x!r}, have {len(others)}")
    dists = cdist(pool[x][None, :], pool.matrix(others))[0]
    dists.sort()
    return float(dists[:k].mean())


def min_distance_to_set(x: str, anchors: list[str], emb: EmbeddingSet) -> float:
    """Distance from `x` to the nearest of `anchors` (the inner min of k-center)."""
    if not anchors:
        raise ValueError("anchors must be nonempty")
    dists = cdist(emb[x][None, :], emb.matrix(anchors))[0]
    return float(dists.min())


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the rows of `a` and `b`."""
    return cdist(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def mean_distances_within(points: np.ndarray, chunk: int = 512) -> np.ndarray:
    """For each row x of `points`, the mean distance to all other rows.

    Chunked so a 10K-point pool never materializes the full distance matrix.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    out = np.empty(n)
    for start in range(0, n, chunk):
        block = cdist(points[start : start + chunk], points)
        out[start : start + chunk] = block.sum(axis=1) / (n - 1)
    return out
