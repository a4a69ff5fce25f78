"""Dataset ingestion, quality filtering, and labeled/unlabeled pool management.

Dataset files are UTF-8 JSON lines, one record per line:
`{"id": str?, "input": str, "references": [str, ...], "meta": {str: str}?}`.
Missing ids are auto-assigned as "line-<zero-padded 0-based index>" so
selections stay reproducible and logs stay readable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Example:
    id: str
    input: str
    references: tuple[str, ...]
    meta: dict[str, str] | None = None

    def __post_init__(self):
        if not self.input:
            raise ValueError(f"example {self.id!r}: input must be nonempty")
        if not self.references:
            raise ValueError(f"example {self.id!r}: references must be nonempty")
        if any(not r.strip() for r in self.references):
            raise ValueError(f"example {self.id!r}: blank reference")


@dataclass
class DatasetSplit:
    name: str
    examples: list[Example]

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ValueError(f"duplicate id {ex.id!r} in split {self.name!r}")
            seen.add(ex.id)

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    def by_id(self) -> dict[str, Example]:
        return {ex.id: ex for ex in self.examples}

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class PoolState:
    """The disjoint unlabeled/labeled id pools driving the AL loop."""

    unlabeled: list[str]
    labeled: list[str]
    source: DatasetSplit

    def __post_init__(self):
        overlap = set(self.unlabeled) & set(self.labeled)
        if overlap:
            raise ValueError(f"pools overlap: {sorted(overlap)[:5]}")
        known = set(self.source.ids())
        unknown = (set(self.unlabeled) | set(self.labeled)) - known
        if unknown:
            raise ValueError(f"pool ids outside source split: {sorted(unknown)[:5]}")


def load_dataset(path: str | Path, split_name: str) -> DatasetSplit:
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"line {lineno}: malformed record ({err.msg})") from err
            if not isinstance(record, dict):
                raise ValueError(f"line {lineno}: record must be an object")
            if "input" not in record:
                raise ValueError(f"line {lineno}: missing input")
            if "references" not in record:
                raise ValueError(f"line {lineno}: missing references")
            references = record["references"]
            if not isinstance(references, list) or not references:
                raise ValueError(f"line {lineno}: references must be a nonempty list")
            example_id = record.get("id")
            if example_id is None:
                example_id = f"line-{lineno - 1:06d}"
            meta = record.get("meta")
            try:
                examples.append(
                    Example(
                        id=str(example_id),
                        input=record["input"],
                        references=tuple(references),
                        meta=dict(meta) if meta is not None else None,
                    )
                )
            except ValueError as err:
                raise ValueError(f"line {lineno}: {err}") from err
    return DatasetSplit(name=split_name, examples=examples)


def filter_by_score(split: DatasetSplit, scores: dict[str, float], threshold: float) -> DatasetSplit:
    """Keep examples whose score is strictly greater than `threshold`; order preserved."""
    missing = [ex.id for ex in split.examples if ex.id not in scores]
    if missing:
        raise ValueError(f"missing scores for ids: {missing[:5]}")
    kept = [ex for ex in split.examples if scores[ex.id] > threshold]
    return DatasetSplit(name=split.name, examples=kept)


def init_pools(train: DatasetSplit, cap: int, seed: int) -> PoolState:
    """Sample min(cap, |train|) ids uniformly without replacement into the
    unlabeled pool; the labeled pool starts empty."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if len(train) == 0:
        raise ValueError("cannot initialize pools from an empty train split")
    ids = train.ids()
    size = min(cap, len(ids))
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = rng.permutation(len(ids))[:size]
    unlabeled = [ids[i] for i in chosen]
    return PoolState(unlabeled=unlabeled, labeled=[], source=train)


def move_to_labeled(pool: PoolState, ids: list[str]) -> PoolState:
    """Remove `ids` from the unlabeled pool and append them, in order, to the
    labeled pool. Every id must currently be unlabeled."""
    unlabeled_set = set(pool.unlabeled)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in batch")
    for example_id in ids:
        if example_id not in unlabeled_set:
            raise ValueError(f"id {example_id!r} is not in the unlabeled pool")
    moving = set(ids)
    return PoolState(
        unlabeled=[i for i in pool.unlabeled if i not in moving],
        labeled=pool.labeled + list(ids),
        source=pool.source,
    )
