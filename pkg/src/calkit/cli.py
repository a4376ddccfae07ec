"""Calkit command line interface.

Calkit runs batch experiments on the Calderón problem: every command reads
a configuration file, writes tables, fields and a JSON manifest into the
output directory, and reports through its exit status whether the
numerical acceptance thresholds were met.
"""

import os
import sys
import time
from pathlib import Path

import typer

import calkit
from calkit.artifacts import write_manifest
from calkit.config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    resolve_output_dir,
)
from calkit.console import (
    print_error,
    print_exception,
    print_event,
    print_success,
    print_warning,
    set_verbose,
    setup_log_file,
)
from calkit.errors import CalkitError
from calkit.experiments import COMMANDS, RunContext, get_command

app = typer.Typer()

# ruff: noqa: FBT001 FBT003 Typer API uses boolean arguments for flags
# ruff: noqa: B008 function-call-in-default-argument

EXIT_USAGE = 1
EXIT_REJECTED = 2
VERBOSE_ENV = "CALKIT_VERBOSE"


def version_callback(value: bool) -> None:
    """Print version and exit if --version flag is set."""
    if value:
        typer.echo(f"calkit {calkit.__version__}")
        raise typer.Exit(0)


def _load(config: Path | None) -> tuple[ExperimentConfig, str | None]:
    if config is None:
        return ExperimentConfig(), None
    if not config.is_file():
        msg = f"configuration file not found: {config}"
        raise ConfigError(msg)
    return load_config(config)


def run(
    command: str,
    config: Path | None,
    out_dir: Path,
    seed: int | None,
    threads: int,
) -> int:
    """Execute one command; return the exit status."""
    started = time.perf_counter()
    try:
        pipeline = get_command(command)
        settings, digest = _load(config)
        ctx = RunContext(
            config=settings,
            out_dir=out_dir,
            command=command,
            seed=settings.seed if seed is None else seed,
            workers=threads,
        )
        print_event(f"{command} → {out_dir}")
        pipeline(ctx)
    except CalkitError as error:
        print_error(None, str(error))
        return EXIT_USAGE
    except (ArithmeticError, ValueError, RuntimeError, MemoryError):
        print_error(None, f"{command} failed")
        print_exception()
        return EXIT_USAGE
    manifest = out_dir / f"{command}.manifest.json"
    parameters = {**settings.to_record(), "seed": ctx.seed, "threads": threads}
    write_manifest(
        manifest,
        command=command,
        config_sha256=digest,
        parameters=parameters,
        outputs=ctx.outputs,
        wall_time=time.perf_counter() - started,
        warnings=ctx.warnings,
        results=ctx.results,
    )
    if not ctx.accepted:
        print_warning(f"{command}: acceptance thresholds missed")
        return EXIT_REJECTED
    print_success(f"{command}: {len(ctx.outputs)} outputs written")
    return 0


@app.command()
def main(
    command: str = typer.Argument(
        ..., help=f"Experiment to run: {', '.join(COMMANDS)}"
    ),
    config: Path | None = typer.Option(
        None, "--config", help="Configuration file (INI key = value)"
    ),
    out: Path | None = typer.Option(
        None,
        "--out",
        help="Output directory [default: $CALKIT_OUT or ./calkit-out]",
    ),
    seed: int | None = typer.Option(
        None, "--seed", min=0, help="Override the configured random seed"
    ),
    threads: int = typer.Option(
        1, "--threads", min=1, help="Worker threads for column and ξ loops"
    ),
    verbose: bool = typer.Option(
        False, "-v", "--verbose", help="Show verbose output"
    ),
    _version: bool = typer.Option(
        False,
        "--version",
        help="Show version and exit",
        callback=version_callback,
        is_eager=True,
    ),
) -> None:
    """Calkit: numerical experiments on the Calderón problem."""
    if command not in COMMANDS:
        print_error(None, f"Unknown command {command!r}")
        typer.echo(f"Commands: {', '.join(COMMANDS)}", err=True)
        raise typer.Exit(EXIT_USAGE)
    if verbose or os.environ.get(VERBOSE_ENV):
        os.environ[VERBOSE_ENV] = "1"
        set_verbose()
    out_dir = resolve_output_dir(out)
    with setup_log_file(out_dir / f"{command}.log"):
        print_event(" ".join([Path(sys.argv[0]).name, *sys.argv[1:]]))
        status = run(command, config, out_dir, seed, threads)
    if status:
        raise typer.Exit(status)
