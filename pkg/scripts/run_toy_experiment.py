#!/usr/bin/env python3
"""Full desk-scale experiment on the toy backend: run every strategy over a
synthetic dataset, then produce the significance, batch-characteristics, and
learning-curve outputs.

Usage: python scripts/run_toy_experiment.py --out runs/demo [--strategies random coreset ...]
"""

import argparse
from pathlib import Path

import yaml

from algen.harness import load_config, load_records, persist, run_seed
from algen.reporting import analyze_records_dir, report_records_dir, stats_records_dir
from algen.synth import make_template_corpus, write_jsonl

ALL_STRATEGIES = ["random", "coreset", "idds", "mte", "mc_dropout", "oracle"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--strategies", nargs="+", default=ALL_STRATEGIES)
    parser.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    parser.add_argument("--n-train", type=int, default=1200)
    parser.add_argument("--n-test", type=int, default=200)
    parser.add_argument("--eval-size", type=int, default=100)
    parser.add_argument("--schedule", nargs="+", type=int, default=[20] * 10 + [100] * 8)
    parser.add_argument("--data-seed", type=int, default=0)
    args = parser.parse_args()

    out = args.out
    data_dir = out / "data"
    records_dir = out / "records"
    train, test = make_template_corpus(args.n_train, args.n_test, seed=args.data_seed)
    write_jsonl(train, data_dir / "train.jsonl")
    write_jsonl(test, data_dir / "test.jsonl")

    for strategy in args.strategies:
        config_path = out / f"config_{strategy}.yaml"
        config_path.write_text(
            yaml.safe_dump(
                {
                    "dataset_name": "synthetic",
                    "train_path": str(data_dir / "train.jsonl"),
                    "test_path": str(data_dir / "test.jsonl"),
                    "metric": {"kind": "bleu"},
                    "strategy": {"name": strategy},
                    "schedule": args.schedule,
                    "seeds": args.seeds,
                    "repetitions": len(args.seeds),
                    "eval_size": args.eval_size,
                    "backend": "toy",
                },
                sort_keys=False,
            ),
            encoding="utf-8",
        )
        config = load_config(config_path)
        for seed in args.seeds:
            records = run_seed(config, seed)
            persist(records, records_dir, config=config, resume=True, create=True)
            final = records[-1].metric_value
            print(f"{strategy} seed {seed}: zero-shot {records[0].metric_value:.3f} "
                  f"-> final {final:.3f}")

    print(f"\n{len(load_records(records_dir))} records in {records_dir / 'records.csv'}")
    for name, path in stats_records_dir(records_dir, out / "stats").items():
        print(f"stats/{name}: {path}")
    for name, path in analyze_records_dir(records_dir, out / "analysis").items():
        print(f"analysis/{name}: {path}")
    for path in report_records_dir(records_dir, out / "report", resamples=2000):
        print(f"report: {path}")


if __name__ == "__main__":
    main()
