"""Finite-difference forward solvers and Dirichlet-to-Neumann maps.

The Schrödinger problem (−Δ + q)v = 0 uses the 7-point Laplacian; the
conductivity problem −div(a∇u) = 0 uses the flux form with the harmonic
mean of a on cell faces. Both impose Dirichlet data on every boundary
node and solve for the (m−2)³ interior unknowns.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cache
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from calkit.console import print_verbose
from calkit.errors import CalkitError
from calkit.geometry import FACES, Grid

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from calkit.geometry import FloatArray, IntArray

DIRECT_SOLVE_MAX_NODES = 33
SOLVER_TOLERANCE = 1e-10
SOLVABILITY_THRESHOLD = 1e-6
COLUMN_BLOCK = 256


class FieldError(CalkitError, ValueError):
    """Error when node values do not fit their grid."""

    def __init__(self, detail: str) -> None:
        """Initialize with a description of the mismatch."""
        super().__init__(f"Invalid field: {detail}")


class SolverError(CalkitError):
    """Base exception for forward-solver failures."""


class NonSolvablePotentialError(SolverError):
    """Error when the discrete Dirichlet problem cannot be solved.

    At a fixed discretization this is the operational test that q does not
    belong to the solvable class (0 is a discrete Dirichlet eigenvalue, or
    close enough to one that the residual is lost).
    """

    def __init__(self, residual: float | None = None) -> None:
        """Initialize with the relative residual, when one was computed."""
        self.residual = residual
        detail = "" if residual is None else f" (residual {residual:.3g})"
        super().__init__(f"non-solvable potential{detail}")


class ColumnSolveError(SolverError):
    """Error when a DN-map column solve fails."""

    def __init__(self, column: int, cause: Exception) -> None:
        """Initialize with the offending boundary basis index."""
        self.column = column
        super().__init__(f"DN map column {column}: {cause}")


class NonPositiveConductivityError(SolverError):
    """Error when a conductivity is not bounded below by a positive a₀."""

    def __init__(self, minimum: float) -> None:
        """Initialize with the observed minimum."""
        self.minimum = minimum
        super().__init__(f"conductivity must be positive, min a = {minimum:g}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values on the Ω-grid."""

    values: NDArray[Any]
    grid: Grid

    def __post_init__(self) -> None:
        """Check shape and finiteness."""
        if self.values.shape != self.grid.shape:
            raise FieldError(
                f"shape {self.values.shape} does not match grid"
                f" {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldError("non-finite node values")

    @classmethod
    def from_function(
        cls, grid: Grid, function: Callable[..., NDArray[Any]]
    ) -> ScalarField:
        """Sample function(x1, x2, x3) at every node."""
        x = grid.coordinates
        values = np.broadcast_to(
            function(x[..., 0], x[..., 1], x[..., 2]), grid.shape
        )
        return cls(np.array(values), grid)

    @classmethod
    def constant(cls, grid: Grid, value: complex) -> ScalarField:
        """Constant field."""
        return cls(np.full(grid.shape, value), grid)

    @property
    def flat(self) -> NDArray[Any]:
        """Values in row-major node order."""
        return self.values.ravel()

    @property
    def is_real(self) -> bool:
        """Check whether the values carry no imaginary part."""
        return not np.iscomplexobj(self.values) or not np.any(
            self.values.imag
        )

    def trace(self) -> BoundaryField:
        """Restrict to the boundary nodes."""
        return BoundaryField(self.flat[self.grid.boundary_flat], self.grid)


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Node values on ∂Ω in boundary enumeration order."""

    values: NDArray[Any]
    grid: Grid

    def __post_init__(self) -> None:
        """Check length and finiteness."""
        if self.values.shape != (self.grid.boundary_count,):
            raise FieldError(
                f"{self.values.shape} boundary values for"
                f" {self.grid.boundary_count} boundary nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldError("non-finite boundary values")

    @classmethod
    def from_function(
        cls, grid: Grid, function: Callable[..., NDArray[Any]]
    ) -> BoundaryField:
        """Sample function(x1, x2, x3) at every boundary node."""
        x = grid.boundary_points
        values = np.broadcast_to(
            function(x[:, 0], x[:, 1], x[:, 2]), (grid.boundary_count,)
        )
        return cls(np.array(values), grid)


def _as_real_if_possible(values: NDArray[Any]) -> NDArray[Any]:
    if np.iscomplexobj(values) and not np.any(values.imag):
        return values.real
    return values


def field_hash(values: NDArray[Any]) -> str:
    """SHA-256 of the node values, for manifests and sidecars."""
    data = np.ascontiguousarray(values, dtype=np.complex128)
    return hashlib.sha256(data.tobytes()).hexdigest()


class LinearSolver:
    """Interior solve A x = b, direct for desk-scale grids.

    Real matrices are reused for complex right-hand sides by solving the
    real and imaginary parts separately.
    """

    def __init__(self, matrix: sparse.csc_matrix, *, direct: bool) -> None:
        """Factorize or prepare the preconditioner."""
        self.matrix = matrix
        self._lu: Any = None
        self._preconditioner: Any = None
        if direct:
            try:
                self._lu = splinalg.splu(matrix)
            except RuntimeError as exc:
                raise NonSolvablePotentialError from exc
        else:
            inverse_diagonal = 1 / matrix.diagonal()
            self._preconditioner = splinalg.LinearOperator(
                matrix.shape,
                matvec=lambda x: inverse_diagonal * x,
                dtype=matrix.dtype,
            )

    def solve(self, rhs: NDArray[Any]) -> NDArray[Any]:
        """Solve for one right-hand side or a block of columns."""
        if np.iscomplexobj(rhs) and not np.iscomplexobj(self.matrix.data):
            return self._solve_same_dtype(rhs.real) + 1j * (
                self._solve_same_dtype(rhs.imag)
            )
        return self._solve_same_dtype(rhs.astype(self.matrix.dtype))

    def _solve_same_dtype(self, rhs: NDArray[Any]) -> NDArray[Any]:
        if self._lu is not None:
            solution = self._lu.solve(rhs)
        elif rhs.ndim == 1:
            solution = self._iterate(rhs)
        else:
            solution = np.column_stack([self._iterate(c) for c in rhs.T])
        self._check(rhs, solution)
        return solution

    def _iterate(self, rhs: NDArray[Any]) -> NDArray[Any]:
        solution, info = splinalg.gmres(
            self.matrix,
            rhs,
            rtol=SOLVER_TOLERANCE,
            atol=0.0,
            restart=200,
            maxiter=50,
            M=self._preconditioner,
        )
        if info < 0:
            raise NonSolvablePotentialError
        return solution

    def _check(self, rhs: NDArray[Any], solution: NDArray[Any]) -> None:
        """Reject lost residuals: q is then treated as non-solvable."""
        if not np.all(np.isfinite(solution)):
            raise NonSolvablePotentialError
        scale = np.linalg.norm(rhs, axis=0)
        if not np.any(scale):
            return
        residual = np.linalg.norm(self.matrix @ solution - rhs, axis=0)
        relative = float(np.max(residual / np.where(scale, scale, 1.0)))
        if relative > SOLVABILITY_THRESHOLD:
            raise NonSolvablePotentialError(relative)


@dataclass(frozen=True, eq=False)
class InteriorSystem:
    """Interior block A_II and coupling A_IB of a discrete operator."""

    grid: Grid
    interior: sparse.csc_matrix
    coupling: sparse.csc_matrix

    def solver(self) -> LinearSolver:
        """Build the interior solver for this operator."""
        direct = self.grid.m <= DIRECT_SOLVE_MAX_NODES
        print_verbose(
            f"{'direct' if direct else 'gmres'} solve,"
            f" {self.interior.shape[0]} unknowns"
        )
        return LinearSolver(self.interior, direct=direct)

    def apply(self, values: NDArray[Any]) -> NDArray[Any]:
        """Apply the operator to a full field, interior rows only."""
        flat = values.ravel()
        return self.interior @ flat[self.grid.interior_flat] + (
            self.coupling @ flat[self.grid.boundary_flat]
        )


def assemble(
    grid: Grid, face_coefficients: Sequence[FloatArray], diagonal: NDArray[Any]
) -> InteriorSystem:
    """Assemble −div(c∇·) + diagonal on interior rows.

    face_coefficients[axis] has m−1 entries along axis (one per cell face
    between consecutive nodes) and m along the others.
    """
    m = grid.m
    h2 = grid.h**2
    interior = grid.interior_flat
    rows = np.arange(len(interior))
    strides = (m * m, m, 1)
    inner = slice(1, m - 1)
    center = diagonal.ravel()[interior].astype(np.result_type(diagonal, float))
    row_parts = [rows]
    col_parts = [interior]
    val_parts: list[NDArray[Any]] = []
    for axis, coefficients in enumerate(face_coefficients):
        plus = [inner, inner, inner]
        minus = [inner, inner, inner]
        plus[axis] = slice(1, m - 1)
        minus[axis] = slice(0, m - 2)
        c_plus = coefficients[tuple(plus)].ravel() / h2
        c_minus = coefficients[tuple(minus)].ravel() / h2
        center = center + c_plus + c_minus
        row_parts += [rows, rows]
        col_parts += [interior + strides[axis], interior - strides[axis]]
        val_parts += [-c_plus, -c_minus]
    matrix = sparse.csr_matrix(
        (
            np.concatenate([center, *val_parts]),
            (np.concatenate(row_parts), np.concatenate(col_parts)),
        ),
        shape=(len(interior), grid.node_count),
    ).tocsc()
    return InteriorSystem(
        grid, matrix[:, interior].tocsc(), matrix[:, grid.boundary_flat]
    )


def schrodinger_system(grid: Grid, q: ScalarField) -> InteriorSystem:
    """Interior system of −Δ_h + q."""
    unit = [
        np.ones(tuple(grid.m - (k == axis) for k in range(3)))
        for axis in range(3)
    ]
    return assemble(grid, unit, _as_real_if_possible(q.values))


def harmonic_face_means(a: NDArray[Any]) -> list[FloatArray]:
    """Harmonic mean of a on the cell faces along each axis."""
    means = []
    for axis in range(3):
        left = np.take(a, np.arange(a.shape[axis] - 1), axis=axis)
        right = np.take(a, np.arange(1, a.shape[axis]), axis=axis)
        means.append(2 * left * right / (left + right))
    return means


def conductivity_system(grid: Grid, a: ScalarField) -> InteriorSystem:
    """Interior system of −div(a∇·) in flux form."""
    values = _positive_conductivity(a)
    return assemble(grid, harmonic_face_means(values), np.zeros(grid.shape))


def _positive_conductivity(a: ScalarField) -> FloatArray:
    if not a.is_real:
        raise NonPositiveConductivityError(float("nan"))
    values = np.real(a.values).astype(float)
    minimum = float(values.min())
    if minimum <= 0:
        raise NonPositiveConductivityError(minimum)
    return values


def _solve_system(
    system: InteriorSystem,
    source: NDArray[Any] | None,
    phi: BoundaryField,
) -> ScalarField:
    grid = system.grid
    rhs = -(system.coupling @ phi.values)
    if source is not None:
        rhs = rhs + source.ravel()[grid.interior_flat]
    solution = system.solver().solve(rhs)
    dtype = np.result_type(solution, phi.values)
    values = np.zeros(grid.node_count, dtype=dtype)
    values[grid.boundary_flat] = phi.values
    values[grid.interior_flat] = solution
    return ScalarField(values.reshape(grid.shape), grid)


def solve_schrodinger(
    grid: Grid, q: ScalarField, phi: BoundaryField
) -> ScalarField:
    """Solve (−Δ_h + q)v = 0 in Ω with v = φ on ∂Ω."""
    return _solve_system(schrodinger_system(grid, q), None, phi)


def solve_dirichlet_source(
    grid: Grid, q: ScalarField, source: ScalarField, phi: BoundaryField
) -> ScalarField:
    """Solve (−Δ_h + q)v = f in Ω with v = φ on ∂Ω."""
    return _solve_system(schrodinger_system(grid, q), source.values, phi)


def solve_conductivity(
    grid: Grid, a: ScalarField, phi: BoundaryField
) -> ScalarField:
    """Solve −div_h(a∇_h u) = 0 in Ω with u = φ on ∂Ω."""
    return _solve_system(conductivity_system(grid, a), None, phi)


def _inward_offsets(grid: Grid) -> list[tuple[IntArray, IntArray, int]]:
    """Per face: boundary positions on it, their flat index and inward step."""
    strides = (grid.m * grid.m, grid.m, 1)
    faces = []
    for f, (axis, side) in enumerate(FACES):
        on_face = np.flatnonzero(grid.face_weights[:, f])
        step = -side * strides[axis]
        faces.append((on_face, grid.boundary_flat[on_face], step))
    return faces


def face_derivatives(v: ScalarField, grid: Grid) -> NDArray[Any]:
    """One-sided second-order outward derivatives on each incident face.

    Shape (nb, 6); zero where a node does not lie on the face. The stencil
    (3v_b − 4v_{b−ν} + v_{b−2ν}) / 2h is exact on quadratics.
    """
    flat = v.flat
    result = np.zeros((grid.boundary_count, len(FACES)), dtype=flat.dtype)
    for f, (positions, nodes, step) in enumerate(_inward_offsets(grid)):
        result[positions, f] = (
            3 * flat[nodes] - 4 * flat[nodes + step] + flat[nodes + 2 * step]
        ) / (2 * grid.h)
    return result


@cache
def trace_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse Neumann-trace operator from node values to ∂Ω."""
    rows, cols, vals = [], [], []
    for f, (positions, nodes, step) in enumerate(_inward_offsets(grid)):
        share = grid.face_weights[positions, f] / grid.weights[positions]
        for offset, weight in ((0, 3.0), (1, -4.0), (2, 1.0)):
            rows.append(positions)
            cols.append(nodes + offset * step)
            vals.append(share * weight / (2 * grid.h))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.boundary_count, grid.node_count),
    )


def neumann_trace(v: ScalarField, grid: Grid) -> BoundaryField:
    """Outward normal derivative at each boundary node.

    On edges and corners the derivatives of the incident faces are averaged
    with the face trapezoid weights, so that Σ_b W_b ∂_νv_b is the
    face-wise trapezoid rule of ∮ ∂_νv dσ.
    """
    return BoundaryField(trace_matrix(grid) @ v.flat, grid)


class DnKind(str, Enum):
    """Equation behind a DN map."""

    SCHRODINGER = "schrodinger"
    CONDUCTIVITY = "conductivity"


@dataclass(frozen=True, eq=False)
class DnMap:
    """Dense discrete DN operator over the nodal boundary basis.

    Rows may be a subset of the boundary nodes (a partial DN map); columns
    always span every boundary node.
    """

    matrix: NDArray[Any]
    kind: DnKind
    grid: Grid
    coefficient_hash: str
    rows: IntArray | None = None

    def apply(self, phi: BoundaryField) -> NDArray[Any]:
        """Neumann data for Dirichlet data φ, on the map's rows."""
        if phi.grid != self.grid:
            raise FieldError("boundary field and DN map use different grids")
        return self.matrix @ phi.values

    @property
    def row_nodes(self) -> IntArray:
        """Boundary positions of the matrix rows."""
        if self.rows is None:
            return np.arange(self.grid.boundary_count)
        return self.rows


def _dn_matrix(system: InteriorSystem, workers: int) -> NDArray[Any]:
    """Λ = T_B − T_I A_II⁻¹ A_IB, solved in column blocks."""
    grid = system.grid
    trace = trace_matrix(grid).tocsc()
    trace_interior = trace[:, grid.interior_flat]
    trace_boundary = trace[:, grid.boundary_flat]
    solver = system.solver()
    nb = grid.boundary_count
    dtype = np.result_type(system.interior.dtype, float)
    result = np.empty((nb, nb), dtype=dtype)

    def block(start: int) -> None:
        stop = min(start + COLUMN_BLOCK, nb)
        rhs = -system.coupling[:, start:stop].toarray()
        try:
            solution = solver.solve(rhs)
        except NonSolvablePotentialError as exc:
            raise ColumnSolveError(start, exc) from exc
        result[:, start:stop] = (
            trace_boundary[:, start:stop].toarray() + trace_interior @ solution
        )

    starts = range(0, nb, COLUMN_BLOCK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(block, starts))
    else:
        for start in starts:
            block(start)
    print_verbose(f"DN map assembled, {nb} columns")
    return result


def dn_map_schrodinger(
    grid: Grid, q: ScalarField, *, workers: int = 1
) -> DnMap:
    """Assemble Λ_q column by column from nodal Dirichlet data."""
    matrix = _dn_matrix(schrodinger_system(grid, q), workers)
    return DnMap(matrix, DnKind.SCHRODINGER, grid, field_hash(q.values))


def dn_map_conductivity(
    grid: Grid, a: ScalarField, *, workers: int = 1
) -> DnMap:
    """Assemble 𝒩_a: column j is a·∂_νu for the j-th nodal datum."""
    matrix = _dn_matrix(conductivity_system(grid, a), workers)
    a_boundary = np.real(a.flat[grid.boundary_flat])
    return DnMap(
        a_boundary[:, None] * matrix,
        DnKind.CONDUCTIVITY,
        grid,
        field_hash(a.values),
    )


def symmetry_defect(dn_map: DnMap) -> float:
    """‖WΛ − ΛᵀW‖_max with W the diagonal of boundary area weights.

    Green's identity makes WΛ symmetric for real coefficients; the
    one-sided Neumann stencil leaves an O(h) defect, largest near edges.
    """
    if dn_map.rows is not None:
        raise FieldError("symmetry needs the full DN map, not a partial one")
    weighted = dn_map.grid.weights[:, None] * dn_map.matrix
    return float(np.max(np.abs(weighted - weighted.T)))


def partial_dn_map(dn_map: DnMap, rows: IntArray) -> DnMap:
    """Keep the Neumann data on a subset V of the boundary."""
    rows = np.asarray(rows, dtype=np.intp)
    return DnMap(
        dn_map.matrix[rows],
        dn_map.kind,
        dn_map.grid,
        dn_map.coefficient_hash,
        dn_map.row_nodes[rows],
    )
