"""Command line entry points: batch runs, reporting, and the session service."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import SuctionSimError
from .harness import MODULES, emit_report, load_records, run_batch


def _parse_envs(value: str) -> list[int]:
    if value == "all":
        return [1, 2, 3, 4]
    try:
        env_ids = sorted({int(v) for v in value.split(",")})
    except ValueError:
        raise click.BadParameter(f"expected env ids like '2' or '1,3', got {value!r}")
    bad = [e for e in env_ids if e not in (1, 2, 3, 4)]
    if bad:
        raise click.BadParameter(f"env ids outside 1..4: {bad}")
    return env_ids


@click.group()
def main() -> None:
    """Suction-simulation experiment harness."""


@main.command()
@click.option("--env", "env_spec", default="all", show_default=True,
              help="environment ids: 'all' or a comma list like '1,3'")
@click.option("--module", "modules", multiple=True, required=True,
              type=click.Choice(MODULES), help="reasoning module (repeatable)")
@click.option("--scenes", default=10, show_default=True, help="scenes per environment")
@click.option("--seed", default=0, show_default=True, help="base scene seed")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="output directory")
@click.option("--workers", default=8, show_default=True)
@click.option("--llm", type=click.Choice(["live", "replay"]), default=None,
              help="chat transport for lrwoc/lrwc modules")
@click.option("--cassette", type=click.Path(exists=True), default=None,
              help="recorded request/response cassette for --llm replay")
@click.option("--distractor-tool", is_flag=True, default=False,
              help="place an extra tool marker near a pool in each scene")
@click.option("--step-budget", default=3000, show_default=True)
@click.option("--particles", default=4000, show_default=True, help="blood particle budget per scene")
def run(env_spec, modules, scenes, seed, out_dir, workers, llm, cassette, distractor_tool, step_budget, particles):
    """Run seeded episodes and persist one record file per episode."""
    env_ids = _parse_envs(env_spec)
    needs_llm = any(m in ("lrwoc", "lrwc") for m in modules)
    if needs_llm and llm is None:
        raise click.UsageError("modules lrwoc/lrwc need --llm live or --llm replay")
    if llm == "replay" and cassette is None:
        raise click.UsageError("--llm replay needs --cassette")
    try:
        paths = run_batch(
            env_ids,
            list(modules),
            scenes=scenes,
            seed=seed,
            out_dir=out_dir,
            workers=workers,
            total_particles=particles,
            distractor_tool=distractor_tool,
            cassette_path=cassette,
            step_budget=step_budget,
        )
    except SuctionSimError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(paths)} records under {Path(out_dir) / 'records'}")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True),
              help="directory holding a records/ subdirectory (or the records themselves)")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="report directory (defaults to the input directory)")
def report(in_dir, out_dir):
    """Aggregate persisted records into CSV, JSON summary, and plots."""
    base = Path(in_dir)
    records_dir = base / "records" if (base / "records").is_dir() else base
    grouped = load_records(records_dir)
    if not grouped:
        raise click.ClickException(f"no .ndjson records under {records_dir}")
    summary = emit_report(grouped, out_dir or base)
    cells = ", ".join(sorted(summary))
    click.echo(f"report for {len(cells.split(', '))} cells: {cells}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve(host, port):
    """Start the interactive session service (HTTP + WebSocket)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
