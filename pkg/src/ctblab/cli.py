"""Command-line front end; batch commands are thin wrappers over the
pipeline and `serve` hosts the session service."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import CONFIG_ENV_VAR, RunConfig
from .pipeline import (
    effort_share_histogram,
    hist_csv,
    render_estimate_report,
    render_hist_text,
    render_sweep_table,
    run_estimate,
    run_simulate,
    run_sweep_omega,
    summarize_panel,
)
from .records import RecordFileError, read_records, write_records
from .tobit import EstimationError

PARSE_EXIT = 3
ESTIMATION_EXIT = 2


def _load_config(config_path, seed):
    config = RunConfig.load(config_path)
    return config.with_overrides(seed=seed)


config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help=f"Config JSON path (default: ${CONFIG_ENV_VAR} or built-in defaults).",
)
seed_option = click.option("--seed", type=int, default=None, help="Override the config seed.")


@click.group()
@click.version_option(package_name="ctblab")
def main():
    """Simulate, estimate, and serve the two-workday allocation experiment."""


@main.command()
@config_option
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), default="decisions.csv",
              show_default=True, help="Decision CSV to write.")
def simulate(config_path, seed, out):
    """Write a synthetic decision panel."""
    config = _load_config(config_path, seed)
    records, summary = run_simulate(config)
    try:
        write_records(records, out)
    except OSError as exc:
        raise click.ClickException(f"cannot write {out}: {exc}")
    click.echo(f"wrote {out}: {summary.render()}")


def _read_records_or_exit(in_path):
    try:
        return read_records(in_path)
    except RecordFileError as exc:
        click.echo(f"parse error in {in_path}: {exc}", err=True)
        sys.exit(PARSE_EXIT)


@main.command()
@click.argument("in_path", type=click.Path(exists=True, dir_okay=False))
@config_option
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the report to this path.")
def estimate(in_path, config_path, seed, out):
    """Estimate the censored regression from a decision CSV and report."""
    config = _load_config(config_path, seed)
    records = _read_records_or_exit(in_path)
    click.echo(f"parsed {len(records)} records "
               f"({len({r.subject_id for r in records})} subjects) from {in_path}")
    try:
        result = run_estimate(records, config)
    except EstimationError as exc:
        click.echo(f"estimation failed: {exc}", err=True)
        sys.exit(ESTIMATION_EXIT)
    report = render_estimate_report(result)
    click.echo(report, nl=False)
    if out:
        Path(out).write_text(report, encoding="utf-8")


@main.command()
@click.argument("in_path", type=click.Path(exists=True, dir_okay=False))
@config_option
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the machine-readable histogram CSV here.")
def hist(in_path, config_path, seed, out):
    """Near-day effort-share histogram at the certain rate, by cell and day."""
    config = _load_config(config_path, seed)
    records = _read_records_or_exit(in_path)
    rows = effort_share_histogram(records, config)
    click.echo(render_hist_text(rows), nl=False)
    if out:
        Path(out).write_text(hist_csv(rows), encoding="utf-8")


@main.command("sweep-omega")
@click.argument("in_path", type=click.Path(exists=True, dir_okay=False))
@config_option
@seed_option
@click.option("--omega", "omegas", type=float, multiple=True, required=True,
              help="Background effort level; repeat for a sweep.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Also write the sweep table to this path.")
def sweep_omega(in_path, config_path, seed, omegas, out):
    """Re-estimate at several background-effort levels."""
    config = _load_config(config_path, seed)
    for omega in omegas:
        if not omega > 0:
            raise click.ClickException(f"omega must be positive, got {omega}")
    records = _read_records_or_exit(in_path)
    try:
        results = run_sweep_omega(records, list(omegas), config)
    except EstimationError as exc:
        click.echo(f"estimation failed: {exc}", err=True)
        sys.exit(ESTIMATION_EXIT)
    table = render_sweep_table(results)
    click.echo(table, nl=False)
    if out:
        Path(out).write_text(table, encoding="utf-8")


@main.command()
@config_option
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), default="sessions.csv",
              show_default=True, help="Decision CSV that completed sessions append to.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--static-dir", type=click.Path(file_okay=False), default=None,
              help="Directory with the built browser UI (served at /).")
def serve(config_path, seed, out, host, port, static_dir):
    """Run the session service for live protocol sessions."""
    import uvicorn

    from .service.app import create_app

    config = _load_config(config_path, seed)
    app = create_app(config, export_path=out, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
