"""Synthetic template datasets for desk-scale experiments and tests.

Examples are noisy variants of a shared pool of templates; the canonical
template is the reference. That gives the toy backend a real retrieval
signal: labeling any variant of a template teaches the "model" that
template's canonical form, which also pays off on held-out variants.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from algen.corpus import Example

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _make_vocab(size: int, rng: random.Random) -> list[str]:
    vocab = set()
    while len(vocab) < size:
        length = rng.randint(2, 9)
        vocab.add("".join(rng.choice(_LETTERS) for _ in range(length)))
    return sorted(vocab)


def _variant(template: list[str], noise_words: int, vocab: list[str], rng: random.Random) -> str:
    tokens = list(template)
    for _ in range(min(noise_words, len(tokens))):
        tokens[rng.randrange(len(tokens))] = rng.choice(vocab)
    return " ".join(tokens)


def make_template_corpus(
    n_train: int,
    n_test: int,
    n_templates: int = 40,
    template_length: tuple[int, int] = (8, 14),
    noise_words: int = 2,
    vocab_size: int = 300,
    seed: int = 0,
) -> tuple[list[Example], list[Example]]:
    """Train and test splits of noisy variants drawn from one template pool.

    Deterministic per seed. Test examples cycle through the same templates as
    train, so retrieval-style learning transfers to the held-out split.
    """
    rng = random.Random(seed)
    vocab = _make_vocab(vocab_size, rng)
    templates = []
    for _ in range(n_templates):
        length = rng.randint(*template_length)
        templates.append([rng.choice(vocab) for _ in range(length)])

    def build(count: int, prefix: str) -> list[Example]:
        out = []
        for i in range(count):
            template = templates[i % n_templates]
            out.append(
                Example(
                    id=f"{prefix}-{i:05d}",
                    input=_variant(template, noise_words, vocab, rng),
                    references=(" ".join(template),),
                )
            )
        return out

    return build(n_train, "tr"), build(n_test, "te")


def write_jsonl(examples: list[Example], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            record = {"id": ex.id, "input": ex.input, "references": list(ex.references)}
            if ex.meta:
                record["meta"] = ex.meta
            fh.write(json.dumps(record) + "\n")
    return path
