"""Named potentials, conductivities and Dirichlet data for experiments."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any

import numpy as np

from calkit.errors import CalkitError
from calkit.forward import BoundaryField, ScalarField

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

    from calkit.geometry import Grid

    Coords = NDArray[Any]
    Profile = Callable[[Coords, Coords, Coords], Coords]


class UnknownProfileError(CalkitError, KeyError):
    """Profile not found in the registry."""

    def __init__(self, kind: str, name: str, known: list[str]) -> None:
        """Initialize with the registry kind and the missing name."""
        self.name = name
        super().__init__(
            f"unknown {kind} {name!r} (known: {', '.join(known)})"
        )

    def __str__(self) -> str:
        """Plain message, without the quoting of KeyError."""
        return str(self.args[0])


BUMP_WIDTH = 0.3


def _zero(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return np.zeros_like(x1)


def _one(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return np.ones_like(x1)


def _bump(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return np.exp(-(x1**2 + x2**2 + x3**2) / (2 * BUMP_WIDTH**2))


def _shifted_bump(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return 0.8 * np.exp(
        -((x1 - 0.3) ** 2 + (x2 + 0.2) ** 2 + x3**2) / (2 * 0.25**2)
    )


def _exp_square(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return np.exp(x1**2)


def _cosine_bump(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    # 1 + bump vanishing to second order on the unit cube's boundary
    factor = np.prod(
        [np.cos(math.pi * x / 2) ** 2 for x in (x1, x2, x3)], axis=0
    )
    return 1 + 0.5 * factor


def _quadratic(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return 1 + x1**2 + 0 * x2


def _x1(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return x1 + 0 * x2


def _saddle(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return x1**2 - x2**2 + 0 * x3


def _exp(x1: Coords, x2: Coords, x3: Coords) -> Coords:
    return np.exp(x1) + 0 * x2


# Potentials q, sampled on the Ω-grid
POTENTIALS: dict[str, Profile] = {
    "zero": _zero,
    "constant": _one,
    "bump": _bump,
    "shifted_bump": _shifted_bump,
}

# Positive conductivities a
CONDUCTIVITIES: dict[str, Profile] = {
    "one": _one,
    "exp_square": _exp_square,
    "cosine_bump": _cosine_bump,
    "quadratic": _quadratic,
}

# Dirichlet data φ on ∂Ω
DIRICHLET_DATA: dict[str, Profile] = {
    "one": _one,
    "x1": _x1,
    "saddle": _saddle,
    "exp": _exp,
}


def _lookup(registry: dict[str, Profile], kind: str, name: str) -> Profile:
    try:
        return registry[name]
    except KeyError as exc:
        raise UnknownProfileError(kind, name, sorted(registry)) from exc


def potential(name: str, grid: Grid, amplitude: float = 1.0) -> ScalarField:
    """Sample a named potential scaled by amplitude."""
    profile = _lookup(POTENTIALS, "potential", name)
    field = ScalarField.from_function(grid, profile)
    return ScalarField(amplitude * field.values, grid)


def conductivity(name: str, grid: Grid) -> ScalarField:
    """Sample a named conductivity."""
    profile = _lookup(CONDUCTIVITIES, "conductivity", name)
    return ScalarField.from_function(grid, profile)


def dirichlet(name: str, grid: Grid) -> BoundaryField:
    """Sample named Dirichlet data at the boundary nodes."""
    profile = _lookup(DIRICHLET_DATA, "Dirichlet data", name)
    return BoundaryField.from_function(grid, profile)
