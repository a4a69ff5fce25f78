"""Command-line interface: run experiments, then analyze / stats / report."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import requests

from algen.backend import ToyBackend
from algen.harness import complete_seeds, load_config, load_records, persist, run_seed
from algen.reporting import analyze_records_dir, report_records_dir, stats_records_dir
from algen.wire import BackendServer, ProtocolError


@click.group()
def main():
    """Pool-based batch active learning simulation for text generation."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", is_flag=True, help="Skip seeds that already have complete records.")
def run_command(config_path: str, out_dir: str, resume: bool):
    """Run the AL loop for every configured seed, persisting per seed."""
    config = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = load_records(out)
    done = complete_seeds(existing, config.dataset_name, config.strategy, len(config.schedule))
    if existing and not resume:
        clash = done & set(config.seeds)
        if clash:
            raise click.ClickException(
                f"seeds {sorted(clash)} already recorded in {out}; pass --resume"
            )
    failed = []
    for seed in config.seeds:
        if resume and seed in done:
            click.echo(f"seed {seed}: already complete, skipping")
            continue
        try:
            records = run_seed(config, seed)
        except (ProtocolError, requests.RequestException, ConnectionError) as err:
            click.echo(f"seed {seed}: aborted ({err})", err=True)
            failed.append(seed)
            continue
        persist(records, out, config=config, resume=True, create=True)
        click.echo(f"seed {seed}: {len(records)} records")
    if failed:
        raise click.ClickException(f"aborted seeds: {failed}")
    click.echo(f"records written to {out / 'records.csv'}")


@main.command("analyze")
@click.option("--records", "records_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--batch-size", default=100, show_default=True)
@click.option("--knn-k", default=10, show_default=True)
def analyze_command(records_dir: str, out_dir: str, batch_size: int, knn_k: int):
    """Batch characteristics and selection-vs-performance tables."""
    paths = analyze_records_dir(records_dir, out_dir, batch_size=batch_size, knn_k=knn_k)
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command("stats")
@click.option("--records", "records_dir", required=True, type=click.Path(exists=True))
@click.option("--baseline", default="random", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--alpha", default=0.05, show_default=True)
@click.option(
    "--alternative",
    default="two-sided",
    type=click.Choice(["two-sided", "greater", "less"]),
    show_default=True,
)
@click.option("--family-size", default=None, type=int, help="Bonferroni family size override.")
def stats_command(records_dir, baseline, out_dir, alpha, alternative, family_size):
    """Wilcoxon/Bonferroni significance table and relative-gain distributions."""
    paths = stats_records_dir(
        records_dir,
        out_dir,
        baseline=baseline,
        alpha=alpha,
        alternative=alternative,
        family_size=family_size,
    )
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command("report")
@click.option("--records", "records_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--level", default=0.95, show_default=True)
@click.option("--resamples", default=10000, show_default=True)
def report_command(records_dir, out_dir, level, resamples):
    """Learning-curve tables with bootstrap CIs, plus SVG line charts."""
    for path in report_records_dir(records_dir, out_dir, level=level, resamples=resamples):
        click.echo(str(path))


@main.command("serve-toy")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8089, show_default=True)
@click.option("--p0", default=0.5, show_default=True, help="Base corruption probability.")
@click.option("--s", default=20.0, show_default=True, help="Corruption decay scale.")
def serve_toy_command(host: str, port: int, p0: float, s: float):
    """Serve the built-in toy backend over the wire protocol."""
    server = BackendServer(ToyBackend(p0=p0, s=s), host=host, port=port)
    click.echo(f"toy backend listening on {server.url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        sys.exit(0)


if __name__ == "__main__":
    main()
