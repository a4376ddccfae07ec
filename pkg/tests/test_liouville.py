"""Tests for the Liouville transform."""

import numpy as np
import pytest

from calkit.forward import (
    BoundaryField,
    ScalarField,
    dn_map_conductivity,
    dn_map_schrodinger,
)
from calkit.geometry import Grid, make_grid
from calkit.liouville import (
    DimensionMismatchError,
    NonPositiveFieldError,
    boundary_gradient,
    dn_transform,
    equal_potential_partner,
    potential_of,
    uniqueness_gap,
)
from calkit.profiles import conductivity


def test_constant_conductivity_has_zero_potential(grid9: Grid) -> None:
    """q vanishes for a constant conductivity."""
    a = ScalarField.constant(grid9, 3.0)
    q = potential_of(a, grid9)
    assert np.max(np.abs(q.values)) < 1e-12


def test_potential_of_gaussian_converges() -> None:
    """a = e^{x₁²} gives q = 1 + x₁², at second order on interior nodes."""
    errors = []
    for m, node in ((9, (6, 4, 4)), (17, (12, 8, 8))):
        grid = make_grid(2.0, 1.0, m, 32)
        a = ScalarField.from_function(grid, lambda x1, x2, x3: np.exp(x1**2))
        q = potential_of(a, grid)
        assert grid.coordinates[node][0] == pytest.approx(0.5)
        errors.append(abs(q.values[node] - 1.25))
    assert 3.5 <= errors[0] / errors[1] <= 4.5


def test_potential_needs_positive_conductivity(grid9: Grid) -> None:
    """A negative conductivity is refused."""
    a = ScalarField.from_function(grid9, lambda x1, x2, x3: x1 - 0.5)
    with pytest.raises(NonPositiveFieldError):
        potential_of(a, grid9)


def test_dn_transform_of_constant_conductivity(grid9: Grid) -> None:
    """For constant a the transformed map is Λ₀."""
    a = ScalarField.constant(grid9, 2.5)
    transformed = dn_transform(
        dn_map_conductivity(grid9, a),
        a.trace(),
        boundary_gradient(a, grid9),
        grid9,
    )
    zero = dn_map_schrodinger(grid9, ScalarField.constant(grid9, 0.0))
    np.testing.assert_allclose(transformed.matrix, zero.matrix, atol=1e-10)


def test_dn_transform_checks_dimensions(grid9: Grid) -> None:
    """The gradient must carry three components per boundary node."""
    a = ScalarField.constant(grid9, 1.0)
    with pytest.raises(DimensionMismatchError):
        dn_transform(
            dn_map_conductivity(grid9, a),
            a.trace(),
            np.zeros((grid9.boundary_count, 2)),
            grid9,
        )


def test_equal_potential_partner(grid9: Grid) -> None:
    """A scaled boundary root gives a different a with the same q."""
    a1 = conductivity("cosine_bump", grid9)
    root = np.sqrt(a1.values)
    boundary_root = BoundaryField(
        1.1 * root.ravel()[grid9.boundary_flat], grid9
    )
    a2 = equal_potential_partner(a1, boundary_root, grid9)
    report = uniqueness_gap(a1, a2, grid9)
    assert report.potential_gap < 1e-6
    assert report.interior_residual < 1e-6
    assert report.boundary_norm == pytest.approx(
        0.1 * np.max(root.ravel()[grid9.boundary_flat]), rel=1e-8
    )


def test_uniqueness_gap_for_equal_traces(grid9: Grid) -> None:
    """With a₁ = a₂ on ∂Ω the partner is a₁ itself."""
    a1 = conductivity("cosine_bump", grid9)
    a2 = equal_potential_partner(a1, None, grid9)
    report = uniqueness_gap(a1, a2, grid9)
    assert report.boundary_norm < 1e-12
    assert np.max(np.abs(report.y.values)) < 1e-8
    assert set(report.to_record()) == {
        "interior_residual",
        "boundary_norm",
        "potential_gap",
    }


@pytest.mark.parametrize("scale", [4.0, 2.5])
def test_potential_ignores_scaling(grid9: Grid, scale: float) -> None:
    """q(c·a) = q(a) for a positive constant c."""
    a = conductivity("cosine_bump", grid9)
    scaled = ScalarField(scale * a.values, grid9)
    np.testing.assert_allclose(
        potential_of(scaled, grid9).values,
        potential_of(a, grid9).values,
        atol=1e-12,
    )


def test_transformed_map_converges() -> None:
    """‖Λ_q − transformed 𝒩_a‖_max shrinks under refinement."""
    differences = []
    for m in (9, 17):
        grid = make_grid(2.0, 1.0, m, 32)
        a = conductivity("cosine_bump", grid)
        transformed = dn_transform(
            dn_map_conductivity(grid, a),
            a.trace(),
            boundary_gradient(a, grid),
            grid,
        )
        direct = dn_map_schrodinger(grid, potential_of(a, grid))
        differences.append(
            float(np.max(np.abs(transformed.matrix - direct.matrix)))
        )
    assert differences[0] / differences[1] > 1.3
