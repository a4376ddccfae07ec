"""Console output of calkit runs: stderr messages, stdout result tables."""

from __future__ import annotations

import os
import traceback
from contextlib import contextmanager
from typing import TYPE_CHECKING, Any

from rich.console import Console
from rich.markup import escape
from rich.table import Table

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence
    from pathlib import Path


_console = Console(soft_wrap=True, stderr=True)
_stdout = Console(soft_wrap=True)
_verbose = False


def set_verbose() -> None:
    """Turn on verbose mode for the rest of the process."""
    global _verbose  # noqa: PLW0603
    _verbose = True


def _emit(*args: Any, style: str) -> None:  # noqa: ANN401
    _console.print(*args, style=style)
    _console.file.flush()


def print_verbose(*args: Any) -> None:  # noqa: ANN401
    """Print solver progress: residuals, iteration counts, sizes."""
    if _verbose:
        _emit(*args, style="dim")


def print_exception() -> None:
    """Print exception with traceback and local variables."""
    if os.environ.get("PYTEST_CURRENT_TEST"):
        traceback.print_exc(file=_console.file)
        return
    _console.print_exception(show_locals=True)
    _console.file.flush()


def print_event(message: str) -> None:
    """Print a run milestone, verbose mode."""
    if _verbose:
        _emit("[bold]>", escape(message), style="magenta")


def print_success(*args: Any) -> None:  # noqa: ANN401
    """Report an accepted run, verbose mode."""
    if _verbose:
        _emit(*args, style="blue")


def print_warning(*args: Any) -> None:  # noqa: ANN401
    """Print a warning; missed acceptance thresholds use this in every mode."""
    _emit("[bold]Warning:", *args, style="yellow")


def print_error(title: str | None, *args: Any) -> None:  # noqa: ANN401
    """Print an error under title, "Error:" by default."""
    _emit(f"[bold]{title or 'Error:'}", *args, style="red")


def print_table(
    title: str, columns: Sequence[str], rows: Sequence[Sequence[object]]
) -> None:
    """Print a result table on stdout."""
    table = Table(title=title)
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(*(_format_cell(cell) for cell in row))
    _stdout.print(table)
    _stdout.file.flush()


def _format_cell(cell: object) -> str:
    if isinstance(cell, float):
        return f"{cell:.6g}"
    if isinstance(cell, complex):
        return f"{cell.real:.6g}{cell.imag:+.6g}j"
    return escape(str(cell))


@contextmanager
def setup_log_file(path: Path) -> Iterator[None]:
    """Send console output to a run log, then replay it to the console."""
    path.parent.mkdir(parents=True, exist_ok=True)
    saved_file = _console.file
    try:
        with path.open("w", encoding="utf-8") as log_file:
            _console.file = log_file
            yield
    finally:
        _console.file = saved_file
        with path.open(encoding="utf-8") as read_file:
            while chunk := read_file.read(64 * 1024):
                saved_file.write(chunk)
        saved_file.flush()
