#!/usr/bin/env python3
"""Main CLI entry point: dipolar-stab <command> [--config path] [--key value ...]."""
import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler

from commands import run_command
from config import LOG_LEVEL, VERSION, parse_config, parse_flag_pairs
from errors import ConfigError, ResultsIOError
from results import ResultRecord, write_results

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Stability analysis of quasi-2D dipolar condensates.",
)
console = Console()
err_console = Console(stderr=True)

PASSTHROUGH = {"allow_extra_args": True, "ignore_unknown_options": True}


def setup_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def print_summary(record: ResultRecord, files: List[Path]) -> None:
    """Short human summary on stdout."""
    if record.status == "ok":
        console.print(f"[bold green]{record.command}[/bold green] finished (exit code {record.exit_code})")
        for key in sorted(record.outputs):
            value = record.outputs[key]
            if isinstance(value, (list, dict)) and len(value) > 8:
                continue
            console.print(f"  {key}: {value}")
    else:
        console.print(f"[bold red]{record.command} failed[/bold red] (exit code {record.exit_code}): "
                      f"{record.error['type']}: {record.error['message']}")
    for path in files:
        console.print(f"  wrote {path}")


def _run(command: str, config: Optional[Path], extra: List[str]) -> None:
    setup_logging()
    try:
        cfg = parse_config(command, config, parse_flag_pairs(extra))
    except ConfigError as e:
        err_console.print(f"[bold red]Configuration error:[/bold red] {e.message}")
        raise typer.Exit(code=e.exit_code)

    record = run_command(cfg)
    try:
        files = write_results(record, cfg.output_dir)
    except ResultsIOError as e:
        err_console.print(f"[bold red]Output error:[/bold red] {e.message}")
        raise typer.Exit(code=e.exit_code)
    print_summary(record, files)
    raise typer.Exit(code=record.exit_code)


ConfigOption = typer.Option(None, "--config", "-c", help="key = value config file")


@app.command("gn-constant", context_settings=PASSTHROUGH)
def gn_constant(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Optimal constant C(a,b) (from --a/--b or from the physical parameters)."""
    _run("gn-constant", config, ctx.args)


@app.command("stability", context_settings=PASSTHROUGH)
def stability(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Classify a parameter point, or every row of --sweep file.csv."""
    _run("stability", config, ctx.args)


@app.command("ground-state", context_settings=PASSTHROUGH)
def ground_state(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Minimize the trapped energy and watch for collapse."""
    _run("ground-state", config, ctx.args)


@app.command("collapse-scan", context_settings=PASSTHROUGH)
def collapse_scan(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Energies of the collapsing family u_L and the c2/clog/c0 fit."""
    _run("collapse-scan", config, ctx.args)


@app.command("symbol-dump", context_settings=PASSTHROUGH)
def symbol_dump(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Write a kernel symbol on the frequency lattice as CSV."""
    _run("symbol-dump", config, ctx.args)


@app.command("townes", context_settings=PASSTHROUGH)
def townes(ctx: typer.Context, config: Optional[Path] = ConfigOption):
    """Townes profile mass and the standard Gagliardo-Nirenberg constant."""
    _run("townes", config, ctx.args)


def _version_callback(value: bool):
    if value:
        console.print(f"dipolar-stab {VERSION}")
        raise typer.Exit()


@app.callback()
def main(version: bool = typer.Option(False, "--version", callback=_version_callback, is_eager=True,
                                      help="Show the version and exit")):
    pass


if __name__ == "__main__":
    app()
