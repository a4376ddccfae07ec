"""Liouville transform between the conductivity and Schrödinger problems.

With v = a^{1/2}u the conductivity equation becomes (−Δ + q)v = 0 with
q = a^{−1/2}Δa^{1/2}, and Dirichlet data transform as φ = a^{1/2}u|∂Ω.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from calkit.errors import CalkitError
from calkit.forward import (
    BoundaryField,
    DnKind,
    DnMap,
    ScalarField,
    schrodinger_system,
    solve_schrodinger,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from calkit.geometry import FloatArray, Grid


class LiouvilleError(CalkitError, ValueError):
    """Base exception for the Liouville transform."""


class NonPositiveFieldError(LiouvilleError):
    """Error when a conductivity or its square root is not positive."""

    def __init__(self, name: str, minimum: float) -> None:
        """Initialize with the field name and its minimum."""
        self.minimum = minimum
        super().__init__(f"{name} must be positive, minimum is {minimum:g}")


class DimensionMismatchError(LiouvilleError):
    """Error when boundary data and DN map sizes disagree."""

    def __init__(self, detail: str) -> None:
        """Initialize with the mismatch."""
        super().__init__(f"Dimension mismatch: {detail}")


def _positive(values: NDArray[Any], name: str) -> FloatArray:
    if np.iscomplexobj(values) and np.any(values.imag):
        raise NonPositiveFieldError(name, float("nan"))
    real = np.real(values).astype(float)
    if real.min() <= 0:
        raise NonPositiveFieldError(name, float(real.min()))
    return real


def second_difference(values: FloatArray, axis: int, h: float) -> FloatArray:
    """Second derivative along axis, one-sided second order at the ends."""
    s = np.moveaxis(values, axis, 0)
    result = np.empty_like(s)
    result[1:-1] = s[2:] - 2 * s[1:-1] + s[:-2]
    result[0] = 2 * s[0] - 5 * s[1] + 4 * s[2] - s[3]
    result[-1] = 2 * s[-1] - 5 * s[-2] + 4 * s[-3] - s[-4]
    return np.moveaxis(result, 0, axis) / h**2


def first_difference(values: FloatArray, axis: int, h: float) -> FloatArray:
    """First derivative along axis, one-sided second order at the ends."""
    s = np.moveaxis(values, axis, 0)
    result = np.empty_like(s)
    result[1:-1] = s[2:] - s[:-2]
    result[0] = -3 * s[0] + 4 * s[1] - s[2]
    result[-1] = 3 * s[-1] - 4 * s[-2] + s[-3]
    return np.moveaxis(result, 0, axis) / (2 * h)


def potential_of(a: ScalarField, grid: Grid) -> ScalarField:
    """Return q = a^{−1/2}Δ_h a^{1/2} at every node."""
    root = np.sqrt(_positive(a.values, "a"))
    laplacian = sum(second_difference(root, axis, grid.h) for axis in range(3))
    return ScalarField(laplacian / root, grid)


def boundary_gradient(a: ScalarField, grid: Grid) -> FloatArray:
    """∇a at the boundary nodes, shape (nb, 3)."""
    values = _positive(a.values, "a")
    columns = [
        first_difference(values, axis, grid.h).ravel()[grid.boundary_flat]
        for axis in range(3)
    ]
    return np.stack(columns, axis=-1)


def dn_transform(
    conductivity_map: DnMap,
    a_boundary: BoundaryField,
    grad_a_boundary: FloatArray,
    grid: Grid,
) -> DnMap:
    """Turn 𝒩_a into Λ_q for q = a^{−1/2}Δa^{1/2}.

    Λφ = a^{−1/2}·𝒩_a(a^{−1/2}φ) + (ν·∇a)/(2a)·φ, i.e. the matrix
    D(a^{−1/2}) 𝒩_a D(a^{−1/2}) + D((ν·∇a)/(2a)). The normal derivative of
    a uses the same face-weighted normal as the Neumann trace, and a
    partial map keeps its rows.
    """
    nb = grid.boundary_count
    matrix = conductivity_map.matrix
    rows = conductivity_map.row_nodes
    if matrix.shape != (len(rows), nb):
        raise DimensionMismatchError(f"DN matrix {matrix.shape}, nb={nb}")
    if a_boundary.values.shape != (nb,):
        raise DimensionMismatchError(f"a has {a_boundary.values.shape}")
    if grad_a_boundary.shape != (nb, 3):
        raise DimensionMismatchError(f"∇a has {grad_a_boundary.shape}")
    a_b = _positive(a_boundary.values, "a on ∂Ω")
    scale = a_b**-0.5
    normal_derivative = np.einsum(
        "bi,bi->b", grid.mean_normals, grad_a_boundary
    )
    result = scale[rows, None] * matrix * scale[None, :]
    result[np.arange(len(rows)), rows] += normal_derivative[rows] / (
        2 * a_b[rows]
    )
    return DnMap(
        result,
        DnKind.SCHRODINGER,
        grid,
        f"liouville:{conductivity_map.coefficient_hash}",
        conductivity_map.rows,
    )


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    """Residuals of the uniqueness step for y = a₁^{1/2} − a₂^{1/2}."""

    interior_residual: float
    boundary_norm: float
    potential_gap: float
    y: ScalarField

    def to_record(self) -> dict[str, float]:
        """Describe the residuals for JSON records."""
        return {
            "interior_residual": self.interior_residual,
            "boundary_norm": self.boundary_norm,
            "potential_gap": self.potential_gap,
        }


def uniqueness_gap(
    a1: ScalarField, a2: ScalarField, grid: Grid
) -> UniquenessReport:
    """Report max|(−Δ_h + q₂)y| inside Ω and max|y| on ∂Ω.

    When q₁ = q₂ both vanish up to discretization; potential_gap reports
    max|q₁ − q₂| over interior nodes so the premise can be checked.
    """
    q1 = potential_of(a1, grid)
    q2 = potential_of(a2, grid)
    y = ScalarField(
        np.sqrt(_positive(a1.values, "a1"))
        - np.sqrt(_positive(a2.values, "a2")),
        grid,
    )
    residual = schrodinger_system(grid, q2).apply(y.values)
    interior = grid.interior_flat
    gap = np.abs(q1.flat[interior] - q2.flat[interior])
    return UniquenessReport(
        interior_residual=float(np.max(np.abs(residual), initial=0.0)),
        boundary_norm=float(np.max(np.abs(y.trace().values))),
        potential_gap=float(np.max(gap, initial=0.0)),
        y=y,
    )


def equal_potential_partner(
    a1: ScalarField, boundary_root: BoundaryField | None, grid: Grid
) -> ScalarField:
    """Build a₂ = s² with (−Δ_h + q₁)s = 0 inside Ω.

    s takes the boundary values boundary_root (a₁^{1/2} on ∂Ω by default),
    so that a₂ shares the potential of a₁ at every interior node.
    """
    q1 = potential_of(a1, grid)
    if boundary_root is None:
        boundary_root = ScalarField(np.sqrt(np.real(a1.values)), grid).trace()
    s = solve_schrodinger(grid, q1, boundary_root)
    root = _positive(s.values, "s")
    return ScalarField(root**2, grid)
