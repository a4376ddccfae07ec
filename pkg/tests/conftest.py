"""Shared fixtures: captured console, clean environment, small grids."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from io import StringIO
from typing import TYPE_CHECKING
from unittest.mock import patch

import pytest
from rich.console import Console

import calkit.console
from calkit.geometry import Grid, make_grid

if TYPE_CHECKING:
    from collections.abc import Iterator


@dataclass
class ConsoleFixture:
    """Captured stderr console of one test.

    A test either reads the capture with getvalue(), declares it irrelevant
    with ignore_output(), or leaves it alone; in the last case the console
    must have stayed silent (warnings, errors and replayed logs included).
    """

    buffer: StringIO = field(default_factory=StringIO)
    seen: bool = field(default=False, init=False)

    def getvalue(self) -> str:
        """Return everything printed so far."""
        self.seen = True
        return self.buffer.getvalue()

    def ignore_output(self) -> None:
        """Accept whatever the test prints."""
        self.seen = True

    def check_silent(self) -> None:
        """Fail if output was printed but never looked at."""
        if not self.seen:
            assert self.buffer.getvalue() == "", "Unexpected console output"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Run every test without CALKIT_* variables from the caller."""
    for name in [k for k in os.environ if k.startswith("CALKIT_")]:
        monkeypatch.delenv(name)


@pytest.fixture(autouse=True)
def reset_verbose() -> None:
    """Start every test in quiet mode."""
    calkit.console._verbose = False


@pytest.fixture
def console_out() -> Iterator[ConsoleFixture]:
    """Swap the shared console for an uncolored in-memory one."""
    fixture = ConsoleFixture()
    console = Console(
        file=fixture.buffer, force_terminal=False, soft_wrap=True
    )
    with patch("calkit.console._console", console):
        yield fixture
    fixture.check_silent()


@pytest.fixture
def grid9() -> Grid:
    """Smallest Ω-grid, R = 2, L = 1."""
    return make_grid(2.0, 1.0, 9, 32)


@pytest.fixture
def grid13() -> Grid:
    """Ω-grid with m = 13, R = 2, L = 1."""
    return make_grid(2.0, 1.0, 13, 32)
