"""Table and figure generation behind the analyze / stats / report commands.

`analyze` re-derives first-iteration batches from the config snapshots in a
records directory (everything is deterministic given the config), so batch
characteristics never need to be persisted with the runs.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np

from algen.analysis import (
    PairedSeries,
    batch_diversity,
    batch_outlier_score,
    bonferroni,
    bootstrap_ci,
    relative_gains,
    relative_selection_performance,
    wilcoxon_signed_rank,
)
from algen.corpus import init_pools, load_dataset
from algen.harness import (
    RunConfig,
    RunRecord,
    apply_prompt,
    build_context,
    derive_seed,
    load_config,
    load_records,
    make_backend,
    per_example_eval_scores,
    run_strategy,
)

logger = logging.getLogger(__name__)


def load_config_snapshots(records_dir: str | Path) -> list[RunConfig]:
    paths = sorted(Path(records_dir).glob("config_*.yaml"))
    if not paths:
        raise ValueError(f"no config snapshots (config_*.yaml) in {records_dir}")
    return [load_config(p) for p in paths]


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


class _SeedCache:
    """Pool, embeddings, and base-model pool scores shared across strategies
    of the same dataset and seed."""

    def __init__(self):
        self._store = {}

    def get(self, config: RunConfig, seed: int):
        key = (config.dataset_name, seed)
        if key not in self._store:
            backend = make_backend(config)
            train = load_dataset(config.train_path, "train")
            pool = init_pools(train, config.pool_cap, derive_seed(seed, "pool"))
            by_id = train.by_id()
            unlabeled = sorted(pool.unlabeled)
            embeddings = backend.embed(
                [(i, apply_prompt(config.prompt_template, by_id[i].input)) for i in unlabeled]
            )
            pool_scores = per_example_eval_scores(
                backend, backend.base_model(), [by_id[i] for i in unlabeled], config
            )
            self._store[key] = (backend, train, pool, embeddings, pool_scores)
        return self._store[key]


def analyze_records_dir(
    records_dir: str | Path,
    out_dir: str | Path,
    batch_size: int = 100,
    knn_k: int = 10,
) -> dict[str, Path]:
    """First-iteration batch characteristics and selection-vs-performance
    tables, using an enlarged analysis batch (default 100)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = _SeedCache()
    detail_rows = []
    profile_acc: dict[str, list[tuple[float, float]]] = defaultdict(list)
    perf_acc: dict[tuple[str, str], list[float]] = defaultdict(list)

    for config in load_config_snapshots(records_dir):
        train_by_id = None
        for seed in config.seeds:
            backend, train, pool, embeddings, pool_scores = cache.get(config, seed)
            if train_by_id is None:
                train_by_id = train.by_id()
            ctx = build_context(
                backend, backend.base_model(), pool, train_by_id, config, seed, 1, embeddings
            )
            batch = run_strategy(config.strategy, ctx, min(batch_size, len(pool.unlabeled)))
            outlier = batch_outlier_score(batch.ids, embeddings, knn_k)
            diversity = batch_diversity(batch.ids, embeddings)
            rel = relative_selection_performance(
                {i: pool_scores[i] for i in batch.ids}, pool_scores
            )
            detail_rows.append(
                [config.dataset_name, config.strategy, seed, outlier, diversity, rel]
            )
            profile_acc[config.strategy].append((outlier, diversity))
            perf_acc[(config.dataset_name, config.strategy)].append(rel)

    profile_path = out_dir / "batch_profiles.csv"
    _write_csv(
        profile_path,
        ["strategy", "outlier_score", "diversity"],
        [
            [strategy, float(np.mean([o for o, _ in vals])), float(np.mean([d for _, d in vals]))]
            for strategy, vals in sorted(profile_acc.items())
        ],
    )
    perf_path = out_dir / "selection_performance.csv"
    _write_csv(
        perf_path,
        ["dataset", "strategy", "relative_performance"],
        [[ds, strat, float(np.mean(vals))] for (ds, strat), vals in sorted(perf_acc.items())],
    )
    detail_path = out_dir / "batch_profiles_detailed.csv"
    _write_csv(
        detail_path,
        ["dataset", "strategy", "seed", "outlier_score", "diversity", "relative_performance"],
        detail_rows,
    )
    return {"profiles": profile_path, "performance": perf_path, "detail": detail_path}


def _series_by_cell(records: list[RunRecord]) -> dict[tuple[int, int], float]:
    return {(r.iteration, r.seed): r.metric_value for r in records if r.iteration >= 1}


def stats_records_dir(
    records_dir: str | Path,
    out_dir: str | Path,
    baseline: str = "random",
    alpha: float = 0.05,
    alternative: str = "two-sided",
    family_size: int | None = None,
) -> dict[str, Path]:
    """Significance table (Wilcoxon + Bonferroni vs the baseline strategy)
    and the per-point relative-gain distribution table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_records(records_dir)
    if not records:
        raise ValueError(f"no records found in {records_dir}")
    grouped: dict[tuple[str, str], list[RunRecord]] = defaultdict(list)
    for r in records:
        grouped[(r.dataset, r.strategy)].append(r)
    datasets = sorted({ds for ds, _ in grouped})

    sig_rows = []
    gain_rows = []
    for dataset in datasets:
        if (dataset, baseline) not in grouped:
            logger.warning("dataset %s has no %r baseline records; skipped", dataset, baseline)
            continue
        base_records = grouped[(dataset, baseline)]
        base_cells = _series_by_cell(base_records)
        strategies = sorted(
            strat for ds, strat in grouped if ds == dataset and strat != baseline
        )
        m = family_size if family_size is not None else max(1, len(strategies))
        for strategy in strategies:
            strat_records = grouped[(dataset, strategy)]
            strat_cells = _series_by_cell(strat_records)
            if set(strat_cells) != set(base_cells):
                raise ValueError(
                    f"{dataset}/{strategy}: cells do not align with baseline "
                    f"({len(strat_cells)} vs {len(base_cells)} points)"
                )
            keys = sorted(strat_cells)
            result = wilcoxon_signed_rank(
                PairedSeries([strat_cells[k] for k in keys], [base_cells[k] for k in keys]),
                alternative=alternative,
            )
            p_adj = bonferroni(result.p_value, m)
            sig_rows.append(
                [dataset, strategy, repr(result.p_value), repr(p_adj), str(p_adj < alpha).lower()]
            )
            zero_shot = {
                r.seed: r.metric_value for r in strat_records if r.iteration == 0
            }
            for point in relative_gains(strat_cells, base_cells, zero_shot):
                gain_rows.append(
                    [
                        dataset,
                        strategy,
                        point.iteration,
                        point.repetition,
                        "" if point.value is None else repr(point.value),
                    ]
                )

    sig_path = out_dir / "significance.csv"
    _write_csv(sig_path, ["dataset", "strategy", "p_raw", "p_bonferroni", "significant"], sig_rows)
    gains_path = out_dir / "gains.csv"
    _write_csv(
        gains_path,
        ["dataset", "strategy", "iteration", "repetition", "relative_gain_pct"],
        gain_rows,
    )
    return {"significance": sig_path, "gains": gains_path}


def report_records_dir(
    records_dir: str | Path,
    out_dir: str | Path,
    level: float = 0.95,
    resamples: int = 10000,
) -> list[Path]:
    """Per-dataset learning-curve tables (mean with bootstrap CI over
    repetitions) plus a simple line chart as an SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_records(records_dir)
    if not records:
        raise ValueError(f"no records found in {records_dir}")
    by_dataset: dict[str, list[RunRecord]] = defaultdict(list)
    for r in records:
        by_dataset[r.dataset].append(r)

    written = []
    for dataset, rows in sorted(by_dataset.items()):
        table = []
        curves: dict[str, tuple[list[int], list[float], list[float], list[float]]] = {}
        strategies = sorted({r.strategy for r in rows})
        for strategy in strategies:
            per_iter: dict[int, list[float]] = defaultdict(list)
            labeled_at: dict[int, int] = {}
            for r in rows:
                if r.strategy != strategy:
                    continue
                per_iter[r.iteration].append(r.metric_value)
                labeled_at[r.iteration] = r.labeled_count
            xs, means, lows, highs = [], [], [], []
            for iteration in sorted(per_iter):
                values = per_iter[iteration]
                seed = derive_seed(0, "bootstrap", dataset, strategy, str(iteration))
                low, high = bootstrap_ci(values, level=level, resamples=resamples, seed=seed)
                mean = float(np.mean(values))
                table.append(
                    [dataset, strategy, iteration, labeled_at[iteration], repr(mean), repr(low), repr(high)]
                )
                xs.append(labeled_at[iteration])
                means.append(mean)
                lows.append(low)
                highs.append(high)
            curves[strategy] = (xs, means, lows, highs)

        csv_path = out_dir / f"learning_curve_{dataset}.csv"
        _write_csv(
            csv_path,
            ["dataset", "strategy", "iteration", "labeled_count", "mean", "ci_low", "ci_high"],
            table,
        )
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for strategy, (xs, means, lows, highs) in curves.items():
            ax.plot(xs, means, marker="o", markersize=3, label=strategy)
            ax.fill_between(xs, lows, highs, alpha=0.2)
        ax.set_xlabel("labeled examples")
        ax.set_ylabel(rows[0].metric_name)
        ax.set_title(dataset)
        ax.legend()
        svg_path = out_dir / f"learning_curves_{dataset}.svg"
        fig.savefig(svg_path, format="svg")
        plt.close(fig)
        written.extend([csv_path, svg_path])
    return written
