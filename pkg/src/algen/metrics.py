"""Text-overlap evaluation metrics and metric-derived uncertainty scores.

All metrics operate on token sequences produced by `tokenize`, so scores do
not depend on where the text came from. Sentence BLEU is smoothed by default
(per-example scores on short generations hit zero n-gram counts constantly);
corpus BLEU is the standard unsmoothed pooled variant.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from algen.backend import Generation
    from algen.corpus import Example

TokenSeq = list[str]

METRIC_KINDS = ("bleu", "ibleu", "rouge_l", "g_score")

_PUNCT = set(string.punctuation)


@dataclass
class MetricConfig:
    """Tunables for the metric family; values are logged with every run."""

    ibleu_alpha: float = 0.8
    bleu_max_order: int = 4
    variance_bleu_order: int = 4

    def __post_init__(self):
        if not 0.0 <= self.ibleu_alpha <= 1.0:
            raise ValueError(f"ibleu_alpha must be in [0, 1], got {self.ibleu_alpha}")
        if self.bleu_max_order < 1 or self.variance_bleu_order < 1:
            raise ValueError("BLEU orders must be >= 1")


def tokenize(text: str) -> TokenSeq:
    """Lowercase, isolate every ASCII punctuation character, split on whitespace."""
    chunks = []
    for ch in text.lower():
        if ch in _PUNCT:
            chunks.append(f" {ch} ")
        else:
            chunks.append(ch)
    return "".join(chunks).split()


def _ngram_counts(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(cand_len: int, ref_lens: list[int]) -> int:
    # Ties between equally-close reference lengths go to the shorter one.
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu_sentence(
    candidate: TokenSeq,
    references: list[TokenSeq],
    max_order: int = 4,
    smooth: bool = True,
) -> float:
    """Sentence-level BLEU: geometric mean of clipped n-gram precisions times
    the brevity penalty.

    The order is capped at the candidate length so that an exact match always
    scores 1.0 even for candidates shorter than `max_order`. With `smooth`,
    a zero clipped precision at order n is replaced by
    1 / (2 * max(1, #candidate n-grams)); without it, any zero precision
    makes the score 0 (used by `bleu_variance`).
    """
    if not references:
        raise ValueError("references must be nonempty")
    c = len(candidate)
    if c == 0:
        return 0.0
    effective_order = min(max_order, c)
    log_prec_sum = 0.0
    for n in range(1, effective_order + 1):
        cand_counts = _ngram_counts(candidate, n)
        total = c - n + 1
        max_ref: Counter = Counter()
        for ref in references:
            for ngram, count in _ngram_counts(ref, n).items():
                if count > max_ref[ngram]:
                    max_ref[ngram] = count
        clipped = sum(min(count, max_ref[ngram]) for ngram, count in cand_counts.items())
        if clipped > 0:
            precision = clipped / total
        elif smooth:
            precision = 1.0 / (2 * max(1, total))
        else:
            return 0.0
        log_prec_sum += math.log(precision)
    r = _closest_ref_length(c, [len(ref) for ref in references])
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_prec_sum / effective_order)


def bleu_corpus(pairs: list[tuple[TokenSeq, list[TokenSeq]]], max_order: int = 4) -> float:
    """Corpus BLEU: n-gram statistics and lengths pooled over all pairs before
    computing precisions and the brevity penalty. Unsmoothed."""
    if not pairs:
        raise ValueError("corpus BLEU needs at least one pair")
    longest = max(len(candidate) for candidate, _ in pairs)
    if longest == 0:
        return 0.0
    effective_order = min(max_order, longest)
    clipped = [0] * effective_order
    totals = [0] * effective_order
    cand_len_sum = 0
    ref_len_sum = 0
    for candidate, references in pairs:
        if not references:
            raise ValueError("references must be nonempty")
        c = len(candidate)
        cand_len_sum += c
        ref_len_sum += _closest_ref_length(c, [len(ref) for ref in references])
        for n in range(1, effective_order + 1):
            if c < n:
                continue
            cand_counts = _ngram_counts(candidate, n)
            max_ref: Counter = Counter()
            for ref in references:
                for ngram, count in _ngram_counts(ref, n).items():
                    if count > max_ref[ngram]:
                        max_ref[ngram] = count
            clipped[n - 1] += sum(
                min(count, max_ref[ngram]) for ngram, count in cand_counts.items()
            )
            totals[n - 1] += c - n + 1
    log_prec_sum = 0.0
    for n in range(effective_order):
        if clipped[n] == 0 or totals[n] == 0:
            return 0.0
        log_prec_sum += math.log(clipped[n] / totals[n])
    if cand_len_sum == 0:
        return 0.0
    brevity = 1.0 if cand_len_sum >= ref_len_sum else math.exp(1.0 - ref_len_sum / cand_len_sum)
    return brevity * math.exp(log_prec_sum / effective_order)


def _lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    # Two-row dynamic program; quadratic time, linear memory.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: TokenSeq, references: list[TokenSeq]) -> float:
    """LCS-based F1 against each reference, maximized over references."""
    if not references:
        raise ValueError("references must be nonempty")
    if not candidate:
        return 0.0
    best = 0.0
    for ref in references:
        lcs = _lcs_length(candidate, ref)
        if lcs == 0 or not ref:
            continue
        precision = lcs / len(candidate)
        recall = lcs / len(ref)
        f1 = 2 * precision * recall / (precision + recall)
        best = max(best, f1)
    return best


def ibleu(
    candidate: TokenSeq,
    references: list[TokenSeq],
    source: TokenSeq,
    cfg: MetricConfig | None = None,
) -> float:
    """Paraphrase score: rewards similarity to the references, penalizes
    similarity to the source. alpha * BLEU(cand, refs) - (1 - alpha) * BLEU(cand, source)."""
    cfg = cfg or MetricConfig()
    to_refs = bleu_sentence(candidate, references, cfg.bleu_max_order)
    to_source = bleu_sentence(candidate, [source], cfg.bleu_max_order)
    return cfg.ibleu_alpha * to_refs - (1.0 - cfg.ibleu_alpha) * to_source


def g_score(formality: float, similarity: float) -> float:
    """Geometric mean of a formality score and a reference-similarity score."""
    if not 0.0 <= formality <= 1.0:
        raise ValueError(f"formality must be in [0, 1], got {formality}")
    if not 0.0 <= similarity <= 1.0:
        raise ValueError(f"similarity must be in [0, 1], got {similarity}")
    return math.sqrt(formality * similarity)


def bleu_variance(samples: list[TokenSeq], order: int = 4) -> float:
    """Disagreement among stochastic generations, as mean squared pairwise
    (1 - BLEU) over ordered pairs. Pairwise BLEU is unsmoothed so fully
    disjoint samples score exactly 1.0."""
    t = len(samples)
    if t < 2:
        raise ValueError("bleu_variance needs at least 2 samples")
    total = 0.0
    for i in range(t):
        for j in range(t):
            if i == j:
                continue
            score = bleu_sentence(samples[i], [samples[j]], order, smooth=False)
            total += (1.0 - score) ** 2
    return total / (t * (t - 1))


def per_example_scores(
    kind: str,
    generations: list["Generation"],
    examples: list["Example"],
    cfg: MetricConfig | None = None,
    aux: dict[str, tuple[float, float]] | None = None,
) -> dict[str, float]:
    """Sentence-level score per example id.

    `aux` maps id -> (formality, similarity) and is required for g_score;
    the component scores come from a backend scoring capability.
    """
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric kind {kind!r}")
    cfg = cfg or MetricConfig()
    if kind == "g_score" and aux is None:
        raise ValueError("g_score needs aux (formality, similarity) per id")
    by_id = {g.example_id: g for g in generations}
    scores: dict[str, float] = {}
    for ex in examples:
        if kind == "g_score":
            if ex.id not in aux:
                raise ValueError(f"missing aux scores for id {ex.id!r}")
            formality, similarity = aux[ex.id]
            scores[ex.id] = g_score(formality, similarity)
            continue
        if ex.id not in by_id:
            raise ValueError(f"missing generation for id {ex.id!r}")
        candidate = tokenize(by_id[ex.id].text)
        refs = [tokenize(r) for r in ex.references]
        if kind == "bleu":
            scores[ex.id] = bleu_sentence(candidate, refs, cfg.bleu_max_order)
        elif kind == "rouge_l":
            scores[ex.id] = rouge_l(candidate, refs)
        else:  # ibleu
            scores[ex.id] = ibleu(candidate, refs, tokenize(ex.input), cfg)
    return scores
