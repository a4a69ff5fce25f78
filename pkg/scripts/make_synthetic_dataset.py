#!/usr/bin/env python3
"""Emit synthetic template-based train/test splits as JSONL dataset files."""

import argparse
from pathlib import Path

from algen.synth import make_template_corpus, write_jsonl


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--n-train", type=int, default=1200)
    parser.add_argument("--n-test", type=int, default=200)
    parser.add_argument("--templates", type=int, default=40)
    parser.add_argument("--min-len", type=int, default=8)
    parser.add_argument("--max-len", type=int, default=14)
    parser.add_argument("--noise-words", type=int, default=2)
    parser.add_argument("--vocab-size", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    train, test = make_template_corpus(
        args.n_train,
        args.n_test,
        n_templates=args.templates,
        template_length=(args.min_len, args.max_len),
        noise_words=args.noise_words,
        vocab_size=args.vocab_size,
        seed=args.seed,
    )
    print(write_jsonl(train, args.out / "train.jsonl"))
    print(write_jsonl(test, args.out / "test.jsonl"))


if __name__ == "__main__":
    main()
