"""Tests for the named coefficient profiles."""

import numpy as np
import pytest

from calkit.errors import CalkitError
from calkit.geometry import Grid
from calkit.profiles import (
    CONDUCTIVITIES,
    UnknownProfileError,
    conductivity,
    dirichlet,
    potential,
)


def test_bump_peaks_at_center(grid9: Grid) -> None:
    """The bump is 1 at the origin, scaled by the amplitude."""
    q = potential("bump", grid9, amplitude=2.0)
    assert q.values[4, 4, 4] == pytest.approx(2.0)
    assert q.values.max() == pytest.approx(2.0)


@pytest.mark.parametrize("name", sorted(CONDUCTIVITIES))
def test_conductivities_are_positive(grid9: Grid, name: str) -> None:
    """Every registered conductivity is positive."""
    assert conductivity(name, grid9).values.min() > 0


def test_dirichlet_data(grid9: Grid) -> None:
    """Dirichlet data are sampled on the boundary nodes."""
    phi = dirichlet("saddle", grid9)
    x = grid9.boundary_points
    np.testing.assert_allclose(phi.values, x[:, 0] ** 2 - x[:, 1] ** 2)


def test_unknown_profile(grid9: Grid) -> None:
    """Unknown names list the known ones."""
    with pytest.raises(UnknownProfileError, match="bump"):
        potential("spike", grid9)
    with pytest.raises(KeyError):
        conductivity("bump", grid9)


def test_unknown_profile_message(grid9: Grid) -> None:
    """The message reads as plain text and is a calkit error."""
    with pytest.raises(CalkitError) as info:
        conductivity("nosuch", grid9)
    assert str(info.value).startswith("unknown conductivity 'nosuch'")
