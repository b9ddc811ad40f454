"""Command-line interface.

Exit codes: 0 on success, 1 on verification failure, 2 on configuration
errors (click also uses 2 for usage errors).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .harness import (
    ConfigError,
    build_atlas_from_config,
    inversion_report,
    load_config,
    make_run_config,
    read_records,
    read_timings,
    run_scenarios,
    timing_report,
)
from .atlas import load_atlas, save_atlas
from .verify import SUITES, run_suite


@click.group()
def main():
    """Planning with a simplified observation model plus discrepancy bounds."""


@main.group()
def atlas():
    """Build and inspect discrepancy atlases."""


@atlas.command("build")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def atlas_build(config_path, out_path, seed):
    """Sample delta states, estimate discrepancies, filter, and save."""
    try:
        raw = load_config(config_path)
        run_cfg = make_run_config(raw, seed=seed)
        built = build_atlas_from_config(run_cfg, seed)
    except ConfigError as exc:
        raise click.exceptions.UsageError(str(exc))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    save_atlas(built, out_path)
    click.echo(json.dumps(built.stats(), sort_keys=True))


@atlas.command("stats")
@click.argument("path", type=click.Path(exists=True))
def atlas_stats(path):
    """Print summary statistics of a stored atlas."""
    built = load_atlas(path)
    stats = built.stats()
    stats["threshold"] = built.threshold
    stats["seed"] = built.seed
    click.echo(json.dumps(stats, sort_keys=True))


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["original", "simplified", "paired"]), default="simplified", show_default=True)
@click.option("--scenarios", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--atlas", "atlas_path", type=click.Path(), default=None, help="Atlas file (overrides config).")
def run(config_path, mode, scenarios, seed, out_dir, atlas_path):
    """Run planning scenarios and write records/timings CSVs."""
    try:
        raw = load_config(config_path)
        cfg = make_run_config(
            raw, mode=mode, n_scenarios=scenarios, seed=seed, out_dir=out_dir,
            atlas_path=atlas_path,
        )
        summary = run_scenarios(cfg)
    except ConfigError as exc:
        raise click.exceptions.UsageError(str(exc))
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


def _csv_echo(rows: list[dict]):
    if not rows:
        click.echo("(no rows)")
        return
    cols = list(rows[0])
    click.echo(",".join(cols))
    for row in rows:
        click.echo(",".join(str(row[c]) for c in cols))


@main.group()
def report():
    """Aggregate reports over a run directory."""


@report.command("inversions")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
def report_inversions(in_dir):
    """Per-timestep disagreement of the bound policies with the plain one."""
    rows = inversion_report(read_records(Path(in_dir) / "records.csv"))
    _csv_echo(rows)


@report.command("timing")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
def report_timing(in_dir):
    """Per-timestep planning-duration summary."""
    rows = timing_report(read_timings(Path(in_dir) / "timings.csv"))
    _csv_echo(rows)


@main.command("plot")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def plot_cmd(in_dir, out_dir):
    """Render SVG plots from a run directory."""
    from .plots import emit_plots

    written = emit_plots(in_dir, out_dir)
    for path in written:
        click.echo(str(path))


@main.command("verify")
@click.argument("suite", type=click.Choice(SUITES))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--instances", type=int, default=None, help="Override instance counts.")
@click.option("--trials", type=int, default=None, help="Override estimator trial counts.")
@click.option("--c-grid", type=str, default=None, help="Comma-separated particle grid.")
@click.option("--out", "out_csv", type=click.Path(), default=None, help="Write the convergence table as CSV.")
def verify_cmd(suite, seed, instances, trials, c_grid, out_csv):
    """Run a verification suite; exits 1 if any check fails."""
    grid = tuple(int(v) for v in c_grid.split(",")) if c_grid else None
    report = run_suite(suite, seed, instances=instances, trials=trials, c_grid=grid)
    click.echo(json.dumps(report, indent=2, sort_keys=True))
    if out_csv:
        rows = None
        if report.get("suite") == "convergence":
            rows = report["rows"]
        elif report.get("suite") == "all":
            rows = report["reports"]["convergence"]["rows"]
        if rows:
            cols = list(rows[0])
            lines = [",".join(cols)] + [",".join(str(r[c]) for c in cols) for r in rows]
            Path(out_csv).write_text("\n".join(lines) + "\n", encoding="ascii")
    if not report["ok"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
