"""Model-backend contract plus the built-in deterministic toy backend.

The toy backend is a retrieval mimic: fine-tuned "models" emit the target of
the labeled example whose input overlaps the query most, with a per-token
corruption rate that shrinks as the labeled pool grows. It exists so the full
AL pipeline runs, deterministically, with no ML infrastructure; it makes no
claim of linguistic fidelity.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import zlib
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from algen.geometry import EmbeddingSet
from algen.metrics import tokenize

CAPABILITY_FLAGS = (
    "finetune",
    "generate",
    "stochastic_generate",
    "embed",
    "score_formality",
    "score_similarity",
)

BASE_MODEL_ID = "base"

TOY_EMBED_DIM = 64

TOY_VOCAB = (
    "river stone cloud lantern harbor meadow ember quill cedar frost "
    "willow marble copper raven sail anchor orchard thistle amber dune "
    "hollow spire fable garnet heather inlet juniper kestrel lagoon moss "
    "nettle onyx pebble quarry reed saffron tundra umber vale wren "
    "yarrow zephyr basalt cairn delta fjord grove heron islet knoll"
).split()


@dataclass(frozen=True)
class ModelHandle:
    model_id: str
    base: bool = False


@dataclass(frozen=True)
class Generation:
    example_id: str
    text: str
    token_entropies: tuple[float, ...]

    def __post_init__(self):
        if any(not math.isfinite(e) or e < 0 for e in self.token_entropies):
            raise ValueError(f"generation {self.example_id!r}: bad entropies")


@dataclass(frozen=True)
class FinetuneSpec:
    epochs: int = 3
    learning_rate: float = 5e-5
    train_batch_size: int = 8
    seed: int = 0


@dataclass(frozen=True)
class BackendCapabilities:
    flags: frozenset[str]

    def has(self, *needed: str) -> bool:
        return all(flag in self.flags for flag in needed)


@dataclass(frozen=True)
class GenerationMode:
    kind: str
    num_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown generation mode {self.kind!r}")
        if self.kind == "stochastic" and self.num_samples < 2:
            raise ValueError("stochastic mode needs num_samples >= 2")


DETERMINISTIC = GenerationMode("deterministic")


def stochastic(num_samples: int, seed: int) -> GenerationMode:
    return GenerationMode("stochastic", num_samples=num_samples, seed=seed)


@runtime_checkable
class Backend(Protocol):
    def capabilities(self) -> BackendCapabilities: ...

    def base_model(self) -> ModelHandle: ...

    def finetune(
        self, base: ModelHandle, labeled: list[tuple[str, str]], spec: FinetuneSpec
    ) -> ModelHandle: ...

    def generate(
        self, model: ModelHandle, inputs: list[tuple[str, str]], mode: GenerationMode
    ) -> dict[str, list[Generation]]: ...

    def embed(self, inputs: list[tuple[str, str]]) -> EmbeddingSet: ...

    def score(self, kind: str, items: list[tuple[str, str | None]]) -> list[float]: ...


@dataclass
class _ToyModel:
    labeled: list[tuple[str, str]]
    seed: int
    # built lazily: token sets per labeled input, tokenized targets, inverted index
    input_tokens: list[set[str]] = field(default_factory=list)
    target_tokens: list[list[str]] = field(default_factory=list)
    index: dict[str, list[int]] = field(default_factory=dict)
    prepared: bool = False

    def prepare(self):
        if self.prepared:
            return
        for i, (inp, target) in enumerate(self.labeled):
            toks = set(tokenize(inp))
            self.input_tokens.append(toks)
            self.target_tokens.append(tokenize(target))
            for tok in toks:
                self.index.setdefault(tok, []).append(i)
        self.prepared = True

    def best_match(self, query_tokens: list[str]) -> int:
        """Labeled index sharing the most tokens with the query; ties go to
        the earliest labeled position."""
        self.prepare()
        counts: dict[int, int] = {}
        for tok in set(query_tokens):
            for idx in self.index.get(tok, ()):
                counts[idx] = counts.get(idx, 0) + 1
        if not counts:
            return 0
        best_count = max(counts.values())
        return min(idx for idx, cnt in counts.items() if cnt == best_count)


class ToyBackend:
    """Deterministic in-process backend implementing every capability.

    Corruption schedule: p(L) = p0 / (1 + |L| / s), so expected output quality
    strictly improves as the labeled pool grows.
    """

    def __init__(self, p0: float = 0.5, s: float = 20.0):
        self.p0 = p0
        self.s = s
        self._entropy_scale = math.log(len(TOY_VOCAB))
        self._models: dict[str, _ToyModel] = {}

    def capabilities(self) -> BackendCapabilities:
        return BackendCapabilities(frozenset(CAPABILITY_FLAGS))

    def base_model(self) -> ModelHandle:
        return ModelHandle(BASE_MODEL_ID, base=True)

    def finetune(
        self, base: ModelHandle, labeled: list[tuple[str, str]], spec: FinetuneSpec
    ) -> ModelHandle:
        if base.model_id != BASE_MODEL_ID:
            raise ValueError("fine-tuning starts from the base model, never incrementally")
        if not labeled:
            return self.base_model()
        payload = json.dumps(
            {
                "labeled": list(labeled),
                "seed": spec.seed,
                "epochs": spec.epochs,
                "learning_rate": spec.learning_rate,
                "train_batch_size": spec.train_batch_size,
            },
            sort_keys=True,
        )
        model_id = "toy-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
        if model_id not in self._models:
            self._models[model_id] = _ToyModel(labeled=list(labeled), seed=spec.seed)
        return ModelHandle(model_id)

    def _resolve(self, model: ModelHandle) -> _ToyModel | None:
        if model.model_id == BASE_MODEL_ID:
            return None
        if model.model_id not in self._models:
            raise ValueError(f"unknown model {model.model_id!r}")
        return self._models[model.model_id]

    def generate(
        self, model: ModelHandle, inputs: list[tuple[str, str]], mode: GenerationMode
    ) -> dict[str, list[Generation]]:
        toy_model = self._resolve(model)
        if mode.kind == "stochastic":
            sample_indices = range(mode.num_samples)
            stream = f"st{mode.seed}"
        else:
            sample_indices = range(1)
            stream = "det"
        model_seed = 0 if toy_model is None else toy_model.seed
        out: dict[str, list[Generation]] = {}
        for example_id, text in inputs:
            query = tokenize(text)
            if toy_model is None:
                template = query
                p = self.p0
            else:
                best = toy_model.best_match(query)
                template = toy_model.target_tokens[best]
                p = self.p0 / (1.0 + len(toy_model.labeled) / self.s)
            generations = []
            for k in sample_indices:
                rng = random.Random(f"{model_seed}|{stream}|{example_id}|{k}")
                tokens = []
                entropies = []
                for tok in template:
                    if rng.random() < p:
                        tokens.append(TOY_VOCAB[rng.randrange(len(TOY_VOCAB))])
                        entropies.append(self._entropy_scale * p)
                    else:
                        tokens.append(tok)
                        entropies.append(self._entropy_scale * (1.0 - p) * 0.1)
                generations.append(
                    Generation(
                        example_id=example_id,
                        text=" ".join(tokens),
                        token_entropies=tuple(entropies),
                    )
                )
            out[example_id] = generations
        return out

    def embed(self, inputs: list[tuple[str, str]]) -> EmbeddingSet:
        """64-dim hashed bag of token bigrams (with boundary markers)."""
        vectors = {}
        for example_id, text in inputs:
            tokens = ["<s>", *tokenize(text), "</s>"]
            vec = np.zeros(TOY_EMBED_DIM)
            for a, b in zip(tokens, tokens[1:]):
                bucket = zlib.crc32(f"{a} {b}".encode("utf-8")) % TOY_EMBED_DIM
                vec[bucket] += 1.0
            vectors[example_id] = vec
        return EmbeddingSet(dim=TOY_EMBED_DIM, vectors=vectors)

    def score(self, kind: str, items: list[tuple[str, str | None]]) -> list[float]:
        if kind == "formality":
            return [self._formality(cand) for cand, _ in items]
        if kind == "similarity":
            scores = []
            for cand, ref in items:
                if ref is None:
                    raise ValueError("similarity scoring needs a reference")
                scores.append(self._overlap_f1(cand, ref))
            return scores
        raise ValueError(f"unknown score kind {kind!r}")

    @staticmethod
    def _formality(text: str) -> float:
        tokens = tokenize(text)
        if not tokens:
            return 0.0
        mean_len = sum(len(t) for t in tokens) / len(tokens)
        return mean_len / (mean_len + 4.0)

    @staticmethod
    def _overlap_f1(candidate: str, reference: str) -> float:
        from collections import Counter

        cand = Counter(tokenize(candidate))
        ref = Counter(tokenize(reference))
        overlap = sum((cand & ref).values())
        total = sum(cand.values()) + sum(ref.values())
        if overlap == 0 or total == 0:
            return 0.0
        return 2.0 * overlap / total
