"""Metric tests: hand-computed cases, independent oracles, and range fuzzing."""

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from algen.metrics import (
    MetricConfig,
    bleu_corpus,
    bleu_sentence,
    bleu_variance,
    g_score,
    ibleu,
    per_example_scores,
    rouge_l,
    tokenize,
)

ALPHABET = ["a", "b", "c"]

tokens = st.lists(st.sampled_from(ALPHABET), max_size=8)
nonempty_tokens = st.lists(st.sampled_from(ALPHABET), min_size=1, max_size=8)


# --- independent oracles ---

def oracle_bleu(candidate, references, max_order, smooth=True):
    """Naive nested-loop BLEU: counts n-grams by list scanning."""
    c = len(candidate)
    if c == 0:
        return 0.0
    eff = min(max_order, c)
    logs = []
    for n in range(1, eff + 1):
        cand_ngrams = [tuple(candidate[i : i + n]) for i in range(c - n + 1)]
        clipped = 0
        for ngram in set(cand_ngrams):
            best = 0
            for ref in references:
                ref_ngrams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
                best = max(best, ref_ngrams.count(ngram))
            clipped += min(cand_ngrams.count(ngram), best)
        total = len(cand_ngrams)
        if clipped > 0:
            p = clipped / total
        elif smooth:
            p = 1.0 / (2 * max(1, total))
        else:
            return 0.0
        logs.append(math.log(p))
    r = min((len(ref) for ref in references), key=lambda length: (abs(length - c), length))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / eff)


def oracle_lcs(a, b):
    """Full-table LCS dynamic program."""
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def oracle_rouge(candidate, references):
    if not candidate:
        return 0.0
    best = 0.0
    for ref in references:
        lcs = oracle_lcs(candidate, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(candidate), lcs / len(ref)
        best = max(best, 2 * p * r / (p + r))
    return best


# --- tokenize ---

def test_tokenize_isolates_punctuation():
    assert tokenize("The cat sat.") == ["the", "cat", "sat", "."]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_apostrophe():
    assert tokenize("don't  stop") == ["don", "'", "t", "stop"]


# --- sentence BLEU ---

def test_bleu_perfect_match():
    cand = tokenize("the cat sat on the mat")
    assert bleu_sentence(cand, [cand]) == 1.0


def test_bleu_clipped_precision_hand_case():
    # clipped count 1 of 4; candidate longer than reference so BP = 1
    assert bleu_sentence(["the", "the", "the", "the"], [["the", "cat"]], max_order=1) == 0.25


def test_bleu_empty_candidate():
    assert bleu_sentence([], [["a"]]) == 0.0


def test_bleu_requires_references():
    with pytest.raises(ValueError):
        bleu_sentence(["a"], [])


def test_bleu_matches_oracle_exhaustive_short():
    refs = [["a", "b", "c"], ["b", "a"]]
    for length in range(0, 5):
        for cand in itertools.product(ALPHABET, repeat=length):
            cand = list(cand)
            for smooth in (True, False):
                got = bleu_sentence(cand, refs, 4, smooth=smooth)
                want = oracle_bleu(cand, refs, 4, smooth=smooth)
                assert got == pytest.approx(want, abs=1e-12)


@settings(max_examples=300)
@given(tokens, st.lists(nonempty_tokens, min_size=1, max_size=3), st.integers(1, 4))
def test_bleu_matches_oracle_fuzzed(cand, refs, order):
    assert bleu_sentence(cand, refs, order) == pytest.approx(
        oracle_bleu(cand, refs, order), abs=1e-12
    )


@given(tokens, st.lists(nonempty_tokens, min_size=1, max_size=3))
def test_bleu_in_range(cand, refs):
    assert 0.0 <= bleu_sentence(cand, refs) <= 1.0


@given(nonempty_tokens)
def test_bleu_exact_match_is_one(cand):
    assert bleu_sentence(cand, [["x", "y"], cand]) == 1.0


# --- corpus BLEU ---

def test_corpus_identity_pairs():
    pair = (["a", "b", "c"], [["a", "b", "c"]])
    for size in (1, 2, 7):
        assert bleu_corpus([pair] * size) == 1.0


def test_corpus_single_pair_equals_unsmoothed_sentence():
    cand = tokenize("the cat sat on a mat")
    refs = [tokenize("the cat sat on the mat today")]
    assert bleu_corpus([(cand, refs)]) == pytest.approx(
        bleu_sentence(cand, refs, smooth=False), abs=1e-12
    )


def test_corpus_two_pair_hand_pooled():
    # order 1: 4/4 clipped; order 2: 1/2; c = 4, r = 5 so BP = exp(1 - 5/4)
    pairs = [
        (["a", "b"], [["a", "b"]]),
        (["a", "c"], [["a", "b", "c"]]),
    ]
    want = math.exp(1.0 - 5.0 / 4.0) * math.exp((math.log(1.0) + math.log(0.5)) / 2.0)
    assert bleu_corpus(pairs) == pytest.approx(want, abs=1e-12)


def test_corpus_empty_errors():
    with pytest.raises(ValueError):
        bleu_corpus([])


# --- ROUGE-L ---

def test_rouge_identical():
    cand = tokenize("the cat sat")
    assert rouge_l(cand, [cand]) == 1.0


def test_rouge_hand_case():
    # LCS of length 2 over two length-3 sequences: P = R = 2/3 so F = 2/3
    assert rouge_l(["the", "cat", "sat"], [["the", "cat", "ate"]]) == pytest.approx(2 / 3)


def test_rouge_empty_candidate():
    assert rouge_l([], [["a", "b"]]) == 0.0


@settings(max_examples=300)
@given(tokens, st.lists(nonempty_tokens, min_size=1, max_size=3))
def test_rouge_matches_oracle(cand, refs):
    assert rouge_l(cand, refs) == oracle_rouge(cand, refs)


@given(nonempty_tokens)
def test_rouge_exact_match_is_one(cand):
    assert rouge_l(cand, [cand, ["z"]]) == 1.0


# --- iBLEU ---

def test_ibleu_all_identical():
    cand = tokenize("a b c d")
    assert ibleu(cand, [cand], cand) == pytest.approx(0.8 * 1.0 - 0.2 * 1.0)


def test_ibleu_alpha_one_reduces_to_bleu():
    cfg = MetricConfig(ibleu_alpha=1.0)
    cand, refs = ["a", "b"], [["a", "c"]]
    assert ibleu(cand, refs, ["z", "z"], cfg) == bleu_sentence(cand, refs)


@given(tokens, st.lists(nonempty_tokens, min_size=1, max_size=2), nonempty_tokens)
def test_ibleu_is_the_stated_combination(cand, refs, source):
    cfg = MetricConfig(ibleu_alpha=0.8)
    want = 0.8 * bleu_sentence(cand, refs) - 0.2 * bleu_sentence(cand, [source])
    assert ibleu(cand, refs, source, cfg) == pytest.approx(want, abs=1e-12)
    assert -1.0 <= ibleu(cand, refs, source, cfg) <= 1.0


def test_ibleu_monotone_in_components():
    # fixed alpha: increasing BLEU-to-refs raises the score, increasing
    # BLEU-to-source lowers it
    alpha = 0.8
    combine = lambda to_refs, to_source: alpha * to_refs - (1 - alpha) * to_source
    assert combine(0.5, 0.25) == pytest.approx(0.35)
    assert combine(0.6, 0.25) > combine(0.5, 0.25)
    assert combine(0.5, 0.30) < combine(0.5, 0.25)


# --- G-Score ---

def test_g_score_cases():
    assert g_score(1.0, 1.0) == 1.0
    assert g_score(0.64, 0.25) == pytest.approx(0.4)
    assert g_score(0.0, 0.7) == 0.0


def test_g_score_rejects_out_of_range():
    with pytest.raises(ValueError):
        g_score(1.2, 0.5)
    with pytest.raises(ValueError):
        g_score(0.5, -0.1)


# --- BLEU variance ---

def test_variance_identical_samples():
    sample = tokenize("a b c")
    assert bleu_variance([sample] * 4) == 0.0


def test_variance_disjoint_pair_is_one():
    assert bleu_variance([["a", "b"], ["c", "d"]]) == 1.0


def test_variance_requires_two_samples():
    with pytest.raises(ValueError):
        bleu_variance([["a"]])


def test_variance_bounded_by_disjoint_case():
    samples = [["a", "b"], ["c", "d"], ["a", "b"]]
    assert bleu_variance(samples) <= 1.0


@given(st.lists(tokens, min_size=2, max_size=5), st.randoms(use_true_random=False))
def test_variance_permutation_invariant(samples, rnd):
    shuffled = list(samples)
    rnd.shuffle(shuffled)
    assert bleu_variance(shuffled) == pytest.approx(bleu_variance(samples), abs=1e-12)


@given(st.lists(nonempty_tokens, min_size=2, max_size=5))
def test_variance_nonnegative_and_zero_iff_all_unit_bleu(samples):
    v = bleu_variance(samples)
    assert v >= 0.0
    all_unit = all(
        bleu_sentence(a, [b], smooth=False) == 1.0
        for a in samples
        for b in samples
        if a is not b
    )
    assert (v == 0.0) == all_unit


# --- per-example scores ---

def _gen(example_id, text):
    from algen.backend import Generation

    return Generation(example_id=example_id, text=text, token_entropies=())


def _ex(example_id, text, refs):
    from algen.corpus import Example

    return Example(id=example_id, input=text, references=tuple(refs))


def test_per_example_bleu_all_match_first_reference():
    examples = [_ex("a", "in a", ["the cat sat"]), _ex("b", "in b", ["dogs run fast"])]
    gens = [_gen("a", "the cat sat"), _gen("b", "dogs run fast")]
    scores = per_example_scores("bleu", gens, examples)
    assert scores == {"a": 1.0, "b": 1.0}


def test_per_example_rouge_reuses_hand_case():
    examples = [_ex("x", "irrelevant", ["the cat ate"])]
    scores = per_example_scores("rouge_l", [_gen("x", "the cat sat")], examples)
    assert scores["x"] == pytest.approx(2 / 3)


def test_per_example_g_score_from_aux():
    examples = [_ex("x", "text", ["ref"])]
    scores = per_example_scores("g_score", [], examples, aux={"x": (1.0, 1.0)})
    assert scores == {"x": 1.0}


def test_per_example_g_score_missing_aux_errors():
    examples = [_ex("x", "text", ["ref"])]
    with pytest.raises(ValueError):
        per_example_scores("g_score", [_gen("x", "t")], examples)


def test_per_example_ibleu_uses_input_as_source():
    examples = [_ex("x", "a b c d", ["a b c d"])]
    scores = per_example_scores("ibleu", [_gen("x", "a b c d")], examples)
    assert scores["x"] == pytest.approx(0.6)
