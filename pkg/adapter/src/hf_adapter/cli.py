"""Adapter CLI: serve a model over the wire protocol, or conformance-check a server."""

from __future__ import annotations

import sys

import click

from hf_adapter.config import AdapterConfig
from hf_adapter.conformance import conformance_check


@click.group()
def main():
    """Seq2seq backend adapter for the AL simulation wire protocol."""


@main.command("serve")
@click.option("--model", default=None, help="Model name (overrides MODEL_NAME).")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int, help="Overrides PORT.")
@click.option("--device", default=None, help="Overrides DEVICE.")
def serve_command(model, host, port, device):
    """Start the adapter server (env vars MODEL_NAME, DEVICE, PORT also apply)."""
    from hf_adapter.server import serve

    config = AdapterConfig.from_env()
    if model:
        config.model_name = model
    if host:
        config.host = host
    if port:
        config.port = port
    if device:
        config.device = device
    click.echo(f"serving {config.model_name} on http://{config.host}:{config.port}")
    serve(config)


@main.command("conformance")
@click.option("--url", required=True, help="Base URL of the server to check.")
def conformance_command(url):
    """Run the protocol conformance suite against a running server."""
    report = conformance_check(url)
    for line in report.lines():
        click.echo(line)
    click.echo(f"{'PASS' if report.passed else 'FAIL'}: "
               f"{sum(c.ok for c in report.checks)}/{len(report.checks)} checks")
    sys.exit(0 if report.passed else 1)


if __name__ == "__main__":
    main()
