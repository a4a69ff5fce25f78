"""Orchestration of the AL simulation loop, evaluation, and persistence.

One run-seed is strictly sequential: init pools, evaluate the base model
zero-shot, then repeatedly select / label / fine-tune-from-base / evaluate.
All randomness comes from per-purpose sub-streams derived from the run seed,
so adding a consumer never perturbs existing streams.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import requests
import yaml

from algen import metrics
from algen.backend import (
    DETERMINISTIC,
    Backend,
    FinetuneSpec,
    Generation,
    ModelHandle,
    ToyBackend,
    stochastic,
)
from algen.corpus import DatasetSplit, Example, init_pools, load_dataset, move_to_labeled
from algen.metrics import METRIC_KINDS, MetricConfig
from algen.strategies import (
    CAPABILITY_NEEDS,
    CONTEXT_NEEDS,
    STRATEGY_NAMES,
    SelectionContext,
    StrategyParams,
    run_strategy,
)
from algen.wire import ProtocolError, RemoteBackend

logger = logging.getLogger(__name__)

RECORD_FIELDS = (
    "dataset",
    "strategy",
    "seed",
    "iteration",
    "labeled_count",
    "metric_name",
    "metric_value",
    "selected_ids",
    "wall_time_s",
)


class CapabilityError(ValueError):
    """Raised before any work when the backend cannot serve the config."""


def derive_seed(master: int, *labels: str) -> int:
    """Stable named sub-stream seed (sha256 of master + labels)."""
    key = f"{master}:" + "/".join(labels)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


@dataclass
class Schedule:
    batch_sizes: list[int]

    def __post_init__(self):
        if not self.batch_sizes or any(b < 1 for b in self.batch_sizes):
            raise ValueError("batch sizes must all be positive")

    def cumulative(self) -> list[int]:
        out, total = [], 0
        for b in self.batch_sizes:
            total += b
            out.append(total)
        return out

    def __len__(self) -> int:
        return len(self.batch_sizes)


def default_schedule() -> Schedule:
    """10 batches of 20 followed by 8 batches of 100 (18 steps, 1000 labels)."""
    return Schedule([20] * 10 + [100] * 8)


@dataclass
class RunConfig:
    dataset_name: str
    train_path: str
    test_path: str
    metric_kind: str
    strategy: str
    seeds: list[int]
    metric: MetricConfig = field(default_factory=MetricConfig)
    strategy_params: StrategyParams = field(default_factory=StrategyParams)
    schedule: Schedule = field(default_factory=default_schedule)
    pool_cap: int = 10000
    repetitions: int = 5
    backend: str = "toy"
    toy_p0: float = 0.5
    toy_s: float = 20.0
    finetune: FinetuneSpec = field(default_factory=FinetuneSpec)
    eval_mode: str = "mean_sentence"
    eval_size: int = 500
    prompt_template: str | None = None
    record_timings: bool = False

    def __post_init__(self):
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.eval_mode not in ("mean_sentence", "corpus"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")
        if len(self.seeds) != self.repetitions:
            raise ValueError(
                f"need exactly {self.repetitions} seeds (repetitions), got {len(self.seeds)}"
            )
        if self.pool_cap < 1 or self.eval_size < 1:
            raise ValueError("pool_cap and eval_size must be >= 1")


@dataclass
class RunRecord:
    dataset: str
    strategy: str
    seed: int
    iteration: int
    labeled_count: int
    selected_ids: list[str]
    metric_name: str
    metric_value: float
    strategy_scores: dict[str, float] | None = None
    wall_time: float = 0.0


def load_config(path: str | Path) -> RunConfig:
    path = Path(path).resolve()  # keeps snapshot paths absolute
    with path.open(encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")

    def resolve(p: str) -> str:
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else path.parent / candidate)

    metric_raw = dict(raw.get("metric") or {})
    kind = metric_raw.pop("kind", None)
    if kind is None:
        raise ValueError("config needs metric.kind")
    strategy_raw = dict(raw.get("strategy") or {})
    name = strategy_raw.pop("name", None)
    if name is None:
        raise ValueError("config needs strategy.name")
    finetune_raw = dict(raw.get("finetune") or {})
    schedule_raw = raw.get("schedule")
    kwargs = dict(
        dataset_name=raw["dataset_name"],
        train_path=resolve(raw["train_path"]),
        test_path=resolve(raw["test_path"]),
        metric_kind=kind,
        metric=MetricConfig(**metric_raw),
        strategy=name,
        strategy_params=StrategyParams(**strategy_raw),
        seeds=[int(s) for s in raw["seeds"]],
        finetune=FinetuneSpec(**finetune_raw),
    )
    if schedule_raw is not None:
        kwargs["schedule"] = Schedule([int(b) for b in schedule_raw])
    for key in (
        "pool_cap",
        "repetitions",
        "backend",
        "toy_p0",
        "toy_s",
        "eval_mode",
        "eval_size",
        "prompt_template",
        "record_timings",
    ):
        if key in raw:
            kwargs[key] = raw[key]
    return RunConfig(**kwargs)


def save_config(config: RunConfig, path: str | Path):
    data = {
        "dataset_name": config.dataset_name,
        "train_path": config.train_path,
        "test_path": config.test_path,
        "metric": {
            "kind": config.metric_kind,
            "ibleu_alpha": config.metric.ibleu_alpha,
            "bleu_max_order": config.metric.bleu_max_order,
            "variance_bleu_order": config.metric.variance_bleu_order,
        },
        "strategy": {
            "name": config.strategy,
            "idds_lambda": config.strategy_params.idds_lambda,
            "mc_samples": config.strategy_params.mc_samples,
            "knn_k": config.strategy_params.knn_k,
        },
        "schedule": list(config.schedule.batch_sizes),
        "pool_cap": config.pool_cap,
        "repetitions": config.repetitions,
        "seeds": list(config.seeds),
        "backend": config.backend,
        "toy_p0": config.toy_p0,
        "toy_s": config.toy_s,
        "finetune": {
            "epochs": config.finetune.epochs,
            "learning_rate": config.finetune.learning_rate,
            "train_batch_size": config.finetune.train_batch_size,
            "seed": config.finetune.seed,
        },
        "eval_mode": config.eval_mode,
        "eval_size": config.eval_size,
        "prompt_template": config.prompt_template,
        "record_timings": config.record_timings,
    }
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")


def make_backend(config: RunConfig) -> Backend:
    if config.backend == "toy":
        return ToyBackend(p0=config.toy_p0, s=config.toy_s)
    if config.backend.startswith("http://") or config.backend.startswith("https://"):
        return RemoteBackend(config.backend)
    raise ValueError(f"backend must be 'toy' or an http(s) URL, got {config.backend!r}")


def required_capabilities(config: RunConfig) -> set[str]:
    needs = {"finetune", "generate"}
    needs.update(CAPABILITY_NEEDS[config.strategy])
    if config.metric_kind == "g_score":
        needs.update({"score_formality", "score_similarity"})
    return needs


def check_capabilities(config: RunConfig, backend: Backend):
    available = backend.capabilities().flags
    missing = required_capabilities(config) - set(available)
    if missing:
        raise CapabilityError(
            f"backend lacks capabilities {sorted(missing)} needed by "
            f"strategy={config.strategy!r}, metric={config.metric_kind!r}"
        )


def apply_prompt(template: str | None, text: str) -> str:
    return template.replace("{input}", text) if template else text


def _score_aux(
    backend: Backend,
    generations: dict[str, Generation],
    examples: list[Example],
) -> dict[str, tuple[float, float]]:
    """Backend-produced (formality, similarity) pairs for g_score."""
    ordered = [ex.id for ex in examples]
    refs = {ex.id: ex.references[0] for ex in examples}
    formality = backend.score("formality", [(generations[i].text, None) for i in ordered])
    similarity = backend.score(
        "similarity", [(generations[i].text, refs[i]) for i in ordered]
    )
    return {i: (formality[k], similarity[k]) for k, i in enumerate(ordered)}


def per_example_eval_scores(
    backend: Backend,
    model: ModelHandle,
    examples: list[Example],
    config: RunConfig,
) -> dict[str, float]:
    """Deterministic-decode per-example scores of `model` on `examples`."""
    inputs = [(ex.id, apply_prompt(config.prompt_template, ex.input)) for ex in examples]
    generations = {i: gens[0] for i, gens in backend.generate(model, inputs, DETERMINISTIC).items()}
    aux = None
    if config.metric_kind == "g_score":
        aux = _score_aux(backend, generations, examples)
    return metrics.per_example_scores(
        config.metric_kind, list(generations.values()), examples, config.metric, aux
    )


def evaluate(
    backend: Backend,
    model: ModelHandle,
    test: list[Example],
    config: RunConfig,
) -> float:
    """Generate deterministically over the test inputs and score them."""
    if not test:
        raise ValueError("test set must be nonempty")
    if config.eval_mode == "mean_sentence":
        scores = per_example_eval_scores(backend, model, test, config)
        return float(np.mean(list(scores.values())))
    # corpus mode: pooled statistics; defined for the BLEU family only
    if config.metric_kind not in ("bleu", "ibleu"):
        raise ValueError(f"corpus eval_mode is not defined for {config.metric_kind!r}")
    inputs = [(ex.id, apply_prompt(config.prompt_template, ex.input)) for ex in test]
    generations = backend.generate(model, inputs, DETERMINISTIC)
    pairs = [
        (metrics.tokenize(generations[ex.id][0].text), [metrics.tokenize(r) for r in ex.references])
        for ex in test
    ]
    corpus = metrics.bleu_corpus(pairs, config.metric.bleu_max_order)
    if config.metric_kind == "bleu":
        return corpus
    to_source = metrics.bleu_corpus(
        [
            (metrics.tokenize(generations[ex.id][0].text), [metrics.tokenize(ex.input)])
            for ex in test
        ],
        config.metric.bleu_max_order,
    )
    alpha = config.metric.ibleu_alpha
    return alpha * corpus - (1.0 - alpha) * to_source


def subsample_eval_set(test: DatasetSplit, size: int, seed: int) -> list[Example]:
    if len(test) <= size:
        return list(test.examples)
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = set(rng.permutation(len(test))[:size].tolist())
    return [ex for i, ex in enumerate(test.examples) if i in keep]


def build_context(
    backend: Backend,
    model: ModelHandle,
    pool,
    train_by_id: dict[str, Example],
    config: RunConfig,
    run_seed: int,
    iteration: int,
    embeddings,
) -> SelectionContext:
    """Populate exactly the context fields the configured strategy needs."""
    needs = CONTEXT_NEEDS[config.strategy]
    ctx = SelectionContext(
        pool=pool,
        rng_seed=derive_seed(run_seed, "strategy", str(iteration)),
        strategy_params=config.strategy_params,
        variance_bleu_order=config.metric.variance_bleu_order,
        embeddings=embeddings if "embeddings" in needs else None,
    )
    unlabeled_examples = [train_by_id[i] for i in sorted(pool.unlabeled)]
    inputs = [
        (ex.id, apply_prompt(config.prompt_template, ex.input)) for ex in unlabeled_examples
    ]
    if "unlabeled_generations" in needs:
        ctx.unlabeled_generations = {
            i: gens[0] for i, gens in backend.generate(model, inputs, DETERMINISTIC).items()
        }
    if "stochastic_samples" in needs:
        mode = stochastic(
            config.strategy_params.mc_samples, derive_seed(run_seed, "mc", str(iteration))
        )
        ctx.stochastic_samples = backend.generate(model, inputs, mode)
    if "per_example_eval" in needs:
        ctx.per_example_eval = per_example_eval_scores(
            backend, model, unlabeled_examples, config
        )
    return ctx


def run_seed(config: RunConfig, seed: int, backend: Backend | None = None) -> list[RunRecord]:
    """Execute the full AL loop for one repetition seed."""
    backend = backend or make_backend(config)
    check_capabilities(config, backend)
    train = load_dataset(config.train_path, "train")
    test = load_dataset(config.test_path, "test")
    train_by_id = train.by_id()
    pool = init_pools(train, config.pool_cap, derive_seed(seed, "pool"))
    pool_size = len(pool.unlabeled)
    eval_set = subsample_eval_set(test, config.eval_size, derive_seed(seed, "eval"))
    spec = replace(config.finetune, seed=derive_seed(seed, "finetune") % 2**31)
    base = backend.base_model()

    records = []
    start = time.perf_counter()
    zero_shot = evaluate(backend, base, eval_set, config)
    records.append(
        RunRecord(
            dataset=config.dataset_name,
            strategy=config.strategy,
            seed=seed,
            iteration=0,
            labeled_count=0,
            selected_ids=[],
            metric_name=config.metric_kind,
            metric_value=zero_shot,
            wall_time=time.perf_counter() - start,
        )
    )

    embeddings = None
    if "embeddings" in CONTEXT_NEEDS[config.strategy]:
        # inputs never change, so embeddings are computed once per run
        embeddings = backend.embed(
            [
                (i, apply_prompt(config.prompt_template, train_by_id[i].input))
                for i in pool.unlabeled
            ]
        )

    model = base
    cumulative = config.schedule.cumulative()
    for iteration, batch_size in enumerate(config.schedule.batch_sizes, start=1):
        if not pool.unlabeled:
            logger.warning("unlabeled pool exhausted at iteration %d; stopping early", iteration)
            break
        start = time.perf_counter()
        ctx = build_context(
            backend, model, pool, train_by_id, config, seed, iteration, embeddings
        )
        batch = run_strategy(config.strategy, ctx, min(batch_size, len(pool.unlabeled)))
        pool = move_to_labeled(pool, batch.ids)
        assert not set(pool.unlabeled) & set(pool.labeled)
        assert len(pool.unlabeled) + len(pool.labeled) == pool_size
        assert len(pool.labeled) == min(cumulative[iteration - 1], pool_size)
        # always fine-tune the base model on ALL data labeled so far
        labeled_pairs = [
            (
                apply_prompt(config.prompt_template, train_by_id[i].input),
                train_by_id[i].references[0],
            )
            for i in pool.labeled
        ]
        model = backend.finetune(base, labeled_pairs, spec)
        value = evaluate(backend, model, eval_set, config)
        records.append(
            RunRecord(
                dataset=config.dataset_name,
                strategy=config.strategy,
                seed=seed,
                iteration=iteration,
                labeled_count=len(pool.labeled),
                selected_ids=list(batch.ids),
                metric_name=config.metric_kind,
                metric_value=value,
                strategy_scores=batch.scores,
                wall_time=time.perf_counter() - start,
            )
        )
    return records


def run(config: RunConfig) -> list[RunRecord]:
    """Run every configured seed. A backend failure aborts only that seed;
    its partial records are kept (and flagged in the log)."""
    backend = make_backend(config)
    check_capabilities(config, backend)
    records = []
    for seed in config.seeds:
        try:
            records.extend(run_seed(config, seed))
        except (ProtocolError, requests.RequestException, ConnectionError) as err:
            done = [r for r in records if r.seed == seed]
            logger.warning(
                "seed %d aborted after %d records: %s", seed, len(done), err
            )
    return records


def _format_float(value: float) -> str:
    return repr(float(value))


def record_to_row(record: RunRecord, record_timings: bool) -> dict[str, str]:
    for example_id in record.selected_ids:
        if ";" in example_id:
            raise ValueError(f"id {example_id!r} contains ';', cannot be joined")
    wall = f"{record.wall_time:.3f}" if record_timings else "0.000"
    return {
        "dataset": record.dataset,
        "strategy": record.strategy,
        "seed": str(record.seed),
        "iteration": str(record.iteration),
        "labeled_count": str(record.labeled_count),
        "metric_name": record.metric_name,
        "metric_value": _format_float(record.metric_value),
        "selected_ids": ";".join(record.selected_ids),
        "wall_time_s": wall,
    }


def row_to_record(row: dict[str, str]) -> RunRecord:
    return RunRecord(
        dataset=row["dataset"],
        strategy=row["strategy"],
        seed=int(row["seed"]),
        iteration=int(row["iteration"]),
        labeled_count=int(row["labeled_count"]),
        selected_ids=[i for i in row["selected_ids"].split(";") if i],
        metric_name=row["metric_name"],
        metric_value=float(row["metric_value"]),
        wall_time=float(row["wall_time_s"]),
    )


def load_records(out_dir: str | Path) -> list[RunRecord]:
    path = Path(out_dir) / "records.csv"
    if not path.exists():
        return []
    with path.open(newline="", encoding="utf-8") as fh:
        return [row_to_record(row) for row in csv.DictReader(fh)]


def complete_seeds(records: list[RunRecord], dataset: str, strategy: str, n_iterations: int) -> set[int]:
    counts: dict[int, int] = {}
    for r in records:
        if r.dataset == dataset and r.strategy == strategy:
            counts[r.seed] = counts.get(r.seed, 0) + 1
    return {seed for seed, count in counts.items() if count >= n_iterations + 1}


def persist(
    records: list[RunRecord],
    out_dir: str | Path,
    config: RunConfig | None = None,
    resume: bool = False,
    create: bool = False,
) -> Path:
    """Write records.csv (canonically sorted) and a config snapshot.

    With `resume`, rows for already-complete (dataset, strategy, seed) cells
    are kept and incoming duplicates dropped, so re-running a completed seed
    never duplicates rows. Incomplete cells being rewritten are replaced.
    """
    out_dir = Path(out_dir)
    if not out_dir.exists():
        if not create:
            raise ValueError(f"output directory {out_dir} does not exist")
        out_dir.mkdir(parents=True)
    existing = load_records(out_dir)
    incoming_cells = {(r.dataset, r.strategy, r.seed) for r in records}
    if existing and not resume:
        clash = {(r.dataset, r.strategy, r.seed) for r in existing} & incoming_cells
        if clash:
            raise ValueError(
                f"records for {sorted(clash)[:3]} already exist in {out_dir}; use resume"
            )
    merged: dict[tuple, RunRecord] = {}
    for r in existing:
        merged[(r.dataset, r.strategy, r.seed, r.iteration)] = r
    for r in records:
        key = (r.dataset, r.strategy, r.seed, r.iteration)
        if resume and key in merged:
            continue
        merged[key] = r
    rows = sorted(merged.values(), key=lambda r: (r.dataset, r.strategy, r.seed, r.iteration))
    record_timings = bool(config and config.record_timings)
    path = out_dir / "records.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        for record in rows:
            writer.writerow(record_to_row(record, record_timings))
    if config is not None:
        save_config(config, out_dir / f"config_{config.dataset_name}_{config.strategy}.yaml")
    return path
