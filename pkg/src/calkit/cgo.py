"""Complex geometric optics solutions by a periodic Fourier solver.

A type-1 solution of (−Δ + q)v = 0 has the form

    v = e^{ρη₁·x}(e^{iρη₂·x}e^{−iξ·x} + w),

a type-2 solution v = e^{−ρη₁·x}(e^{−iρη₂·x} + w). The remainder w is
the fixed point of w ↦ 𝒦_ρ[F_ρ − q̃w], where 𝒦_ρ solves
−Δz − 2ρη₁·∇z − ρ²z = F on the periodic box Q and restricts to Ω.

Spectral work happens in rotated coordinates y = Sx with Sη₁ = e₁, where
the basis e^{iπy₁/2R}e^{iπα·y/R} turns the equation into a division by

    d_α = (π/R)²|α + e₁/2|² − ρ² − (2iπρ/R)(α₁ + 1/2),

and |d_α| ≥ πρ/R because of the imaginary part. The remainder is iterated
on the rotated Q-grid nodes; fields given on the Ω-grid are resampled
there by trilinear interpolation, and w is brought back to Ω-grid nodes
with its oscillating carrier divided out before interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import fft, ndimage

from calkit.console import print_verbose
from calkit.errors import CalkitError
from calkit.forward import BoundaryField, ScalarField, schrodinger_system
from calkit.geometry import Frame, q_grid_axis, rotation_to_e1

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from calkit.geometry import FloatArray, Grid


MIN_LATTICE = 32
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITER = 25
STALL_LIMIT = 3
FLOOR_SLACK = 1e-12


class CgoError(CalkitError):
    """Base exception for CGO construction."""


class InvalidCgoParameterError(CgoError):
    """Error when ρ or the right-hand side is unusable."""

    def __init__(self, detail: str) -> None:
        """Initialize with the rejected input."""
        super().__init__(f"Invalid CGO input: {detail}")


class DomainOutsideBoxError(CgoError):
    """Error when rotated Ω does not fit inside the periodic box."""

    def __init__(self, extent: float, R: float) -> None:
        """Initialize with the rotated extent of Ω."""
        self.extent = extent
        super().__init__(
            f"rotated Ω reaches {extent:.4g}, periodic box half-width is"
            f" {R:g}; increase R (R > L√3 always suffices)"
        )


class NoContractionError(CgoError):
    """Error when the fixed-point iteration stops contracting."""

    def __init__(self, rho: float, ratios: Sequence[float]) -> None:
        """Initialize with ρ and the recent contraction ratios."""
        self.rho = rho
        self.ratios = list(ratios)
        shown = ", ".join(f"{r:.3g}" for r in ratios)
        super().__init__(f"no contraction at this ρ={rho:g} (ratios {shown})")


class MaxIterationsError(CgoError):
    """Error when the tolerance is not reached within max_iter."""

    def __init__(self, max_iter: int, difference: float) -> None:
        """Initialize with the iteration budget and the last step size."""
        self.difference = difference
        super().__init__(
            f"max_iter exceeded ({max_iter}), last step {difference:.3g}"
        )


class CgoKind(str, Enum):
    """Form of a CGO solution."""

    TYPE1 = "type1"
    TYPE2 = "type2"


def lattice_size(R: float, rho: float, M: int) -> int:
    """Smallest even FFT-friendly size ≥ max(M, 32, ⌈8Rρ/π⌉)."""
    target = max(M, MIN_LATTICE, math.ceil(8 * R * rho / math.pi))
    size = fft.next_fast_len(target)
    while size % 2:
        size = fft.next_fast_len(size + 1)
    return size


def box_denominators(R: float, rho: float, M: int) -> NDArray[np.complex128]:
    """d_α on the DFT lattice, indexed like fftn output."""
    alpha = np.fft.fftfreq(M, d=1.0 / M)
    a1 = (alpha + 0.5)[:, None, None]
    a2 = alpha[None, :, None]
    a3 = alpha[None, None, :]
    k = math.pi / R
    return k**2 * (a1**2 + a2**2 + a3**2) - rho**2 - 2j * k * rho * a1


@dataclass(frozen=True, eq=False)
class FourierLattice:
    """Periodic solver data for one (R, ρ, M, S).

    The modes are the DFT integers −M/2 ≤ α_j ≤ M/2 − 1 on each axis.
    """

    R: float
    rho: float
    M: int
    rotation: FloatArray
    denominators: NDArray[np.complex128] = field(repr=False)

    @classmethod
    def build(
        cls, R: float, rho: float, M: int, rotation: FloatArray
    ) -> FourierLattice:
        """Evaluate the denominators and check their floor πρ/R."""
        if rho <= 0:
            raise InvalidCgoParameterError(f"ρ must be positive, got {rho}")
        denominators = box_denominators(R, rho, M)
        lattice = cls(R, rho, M, rotation, denominators)
        floor = math.pi * rho / R
        assert lattice.min_modulus >= floor * (1 - FLOOR_SLACK), (
            "denominator floor violated"
        )
        return lattice

    @property
    def alpha_max(self) -> int:
        """Largest positive mode index."""
        return self.M // 2 - 1

    @property
    def min_modulus(self) -> float:
        """min_α |d_α|."""
        return float(np.min(np.abs(self.denominators)))

    @property
    def spacing(self) -> float:
        """Q-grid spacing."""
        return 2 * self.R / self.M

    def _phase(self) -> NDArray[np.complex128]:
        y1 = q_grid_axis(self.R, self.M)
        return np.exp(-1j * math.pi * y1 / (2 * self.R))[:, None, None]

    def solve(
        self, rhs: NDArray[Any], *, workers: int = 1
    ) -> NDArray[np.complex128]:
        """Solve −Δz − 2ρ∂_{y₁}z − ρ²z = F on the rotated Q-grid."""
        phase = self._phase()
        spectrum = fft.fftn(rhs * phase, workers=workers)
        return fft.ifftn(spectrum / self.denominators, workers=workers) / phase

    def spectral_residual(
        self, rhs: NDArray[Any], z: NDArray[Any], *, workers: int = 1
    ) -> float:
        """Relative residual of the periodic equation, in spectral space."""
        phase = self._phase()
        expected = fft.fftn(rhs * phase, workers=workers)
        applied = self.denominators * fft.fftn(z * phase, workers=workers)
        scale = float(np.linalg.norm(expected))
        if scale == 0:
            return float(np.linalg.norm(applied))
        return float(np.linalg.norm(applied - expected)) / scale

    def norm(self, values: NDArray[Any]) -> float:
        """Discrete L² norm on the Q-grid."""
        return float(np.sqrt(np.sum(np.abs(values) ** 2) * self.spacing**3))

    def box_points(self) -> FloatArray:
        """x-coordinates of the rotated Q-grid nodes, shape (M, M, M, 3)."""
        y = q_grid_axis(self.R, self.M)
        y1, y2, y3 = np.meshgrid(y, y, y, indexing="ij")
        return np.stack([y1, y2, y3], axis=-1) @ self.rotation


def periodic_solve(
    rhs: NDArray[Any],
    rho: float,
    eta1: FloatArray,
    grid: Grid,
    *,
    workers: int = 1,
) -> NDArray[np.complex128]:
    """Solve the conjugated equation on Q for F sampled in y = Sx.

    The Q-grid size is taken from F, which must be a cube of even side.
    """
    if rho <= 0:
        raise InvalidCgoParameterError(f"ρ must be positive, got {rho}")
    size = rhs.shape[0]
    if rhs.shape != (size, size, size) or size % 2:
        raise InvalidCgoParameterError(f"F has shape {rhs.shape}")
    if not np.all(np.isfinite(rhs)):
        raise InvalidCgoParameterError("F has non-finite entries")
    lattice = FourierLattice.build(grid.R, rho, size, rotation_to_e1(eta1))
    return lattice.solve(rhs, workers=workers)


def _interpolate(
    values: NDArray[Any], coordinates: FloatArray
) -> NDArray[Any]:
    """Trilinear interpolation at fractional index coordinates (3, ...)."""
    real = ndimage.map_coordinates(
        np.real(values), coordinates, order=1, mode="nearest"
    )
    if not np.iscomplexobj(values):
        return real
    imag = ndimage.map_coordinates(
        np.imag(values), coordinates, order=1, mode="nearest"
    )
    return real + 1j * imag


def _signs(kind: CgoKind) -> float:
    return 1.0 if kind is CgoKind.TYPE1 else -1.0


def weight(frame: Frame, kind: CgoKind, points: FloatArray) -> FloatArray:
    """Exponential factor e^{±ρη₁·x}."""
    return np.exp(_signs(kind) * frame.rho * (points @ frame.eta1))


def carrier(
    frame: Frame, kind: CgoKind, points: FloatArray
) -> NDArray[np.complex128]:
    """Explicit oscillating factor of the CGO form at points (..., 3)."""
    phase = _signs(kind) * frame.rho * (points @ frame.eta2)
    if kind is CgoKind.TYPE1:
        phase = phase - points @ frame.xi
    return np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class CgoSolution:
    """CGO solution with its remainder and diagnostics.

    v = weight·(carrier + w) holds nodewise on the Ω-grid. w_box keeps the
    remainder on the rotated Q-grid, where w_L2 and h2_norm are measured
    over the nodes inside Ω.
    """

    kind: CgoKind
    frame: Frame
    v: ScalarField
    w: ScalarField
    w_L2: float
    h2_norm: float
    residual: float
    iterations: int
    fixed_point_residual: float = 0.0
    history: tuple[float, ...] = ()
    box_size: int = 0
    contraction_estimate: float | None = None
    w_box: NDArray[np.complex128] | None = field(default=None, repr=False)

    def to_record(self) -> dict[str, Any]:
        """Describe the solution for JSON records."""
        return {
            "kind": self.kind.value,
            "frame": self.frame.to_record(),
            "iterations": self.iterations,
            "w_L2": self.w_L2,
            "h2_surrogate": self.h2_norm,
            "residual": self.residual,
            "fixed_point_residual": self.fixed_point_residual,
            "step_history": list(self.history),
            "box_size": self.box_size,
            "contraction_constant_estimate": self.contraction_estimate,
        }


@dataclass(frozen=True, eq=False)
class _BoxSetup:
    lattice: FourierLattice
    points: FloatArray
    inside: NDArray[np.bool_]


def _box_setup(frame: Frame, kind: CgoKind, grid: Grid) -> _BoxSetup:
    direction = _signs(kind) * frame.eta1
    rotation = rotation_to_e1(direction)
    size = lattice_size(grid.R, frame.rho, grid.M)
    if size != grid.M:
        print_verbose(f"Q-grid enlarged from M={grid.M} to M={size}")
    corners = grid.L * np.array(
        [[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)]
    )
    extent = float(np.max(np.abs(corners @ rotation.T)))
    if extent >= grid.R - 2 * grid.R / size:
        raise DomainOutsideBoxError(extent, grid.R)
    lattice = FourierLattice.build(grid.R, frame.rho, size, rotation)
    points = lattice.box_points()
    inside = np.all(np.abs(points) <= grid.L * (1 + 1e-12), axis=-1)
    return _BoxSetup(lattice, points, inside)


def _omega_to_box(
    values: NDArray[Any], setup: _BoxSetup, grid: Grid
) -> NDArray[Any]:
    """Zero-extended trilinear resampling of an Ω-grid field."""
    coordinates = np.moveaxis((setup.points + grid.L) / grid.h, -1, 0)
    return np.where(setup.inside, _interpolate(values, coordinates), 0.0)


def _box_to_omega(
    values: NDArray[Any], lattice: FourierLattice, points: FloatArray
) -> NDArray[Any]:
    """Trilinear interpolation from the rotated Q-grid at x-points."""
    y = points @ lattice.rotation.T
    coordinates = np.moveaxis((y + lattice.R) / lattice.spacing, -1, 0)
    return _interpolate(values, coordinates)


def _omega_norm(values: NDArray[Any], setup: _BoxSetup) -> float:
    inside = values[setup.inside]
    spacing = setup.lattice.spacing
    return float(np.sqrt(np.sum(np.abs(inside) ** 2) * spacing**3))


def h2_surrogate(values: NDArray[Any], setup: _BoxSetup) -> float:
    """L² of values plus all second differences, over nodes inside Ω."""
    spacing = setup.lattice.spacing
    total = _omega_norm(values, setup) ** 2
    for i in range(3):
        second = (
            np.roll(values, -1, axis=i)
            - 2 * values
            + np.roll(values, 1, axis=i)
        ) / spacing**2
        total += _omega_norm(second, setup) ** 2
        for j in range(i + 1, 3):
            plus = np.roll(values, -1, axis=j)
            minus = np.roll(values, 1, axis=j)
            mixed = (
                np.roll(plus, -1, axis=i)
                - np.roll(minus, -1, axis=i)
                - np.roll(plus, 1, axis=i)
                + np.roll(minus, 1, axis=i)
            ) / (4 * spacing**2)
            total += 2 * _omega_norm(mixed, setup) ** 2
    return math.sqrt(total)


def _fd_residual(v: ScalarField, q: ScalarField, rho: float) -> float:
    """Relative residual of (−Δ_h + q)v on interior nodes."""
    grid = v.grid
    residual = schrodinger_system(grid, q).apply(v.values)
    interior = v.flat[grid.interior_flat]
    scale = max(rho**2, 1.0) * float(np.linalg.norm(interior))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(residual)) / scale


def _assemble_solution(
    q: ScalarField,
    frame: Frame,
    kind: CgoKind,
    w_omega: NDArray[Any],
    **diagnostics: Any,  # noqa: ANN401
) -> CgoSolution:
    grid = q.grid
    x = grid.coordinates
    factor = carrier(frame, kind, x) + w_omega
    v = ScalarField(weight(frame, kind, x) * factor, grid)
    w = ScalarField(np.asarray(w_omega, dtype=np.complex128), grid)
    return CgoSolution(
        kind=kind,
        frame=frame,
        v=v,
        w=w,
        residual=_fd_residual(v, q, frame.rho),
        **diagnostics,
    )


def build_cgo(
    q: ScalarField,
    frame: Frame,
    kind: CgoKind,
    grid: Grid,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    workers: int = 1,
) -> CgoSolution:
    """Iterate w ↦ 𝒦_ρ[F_ρ − q̃w] from w = 0 and assemble v.

    Stops when the step ‖w_{k+1} − w_k‖_{L²(Ω)} is at most tol. Raises
    NoContractionError when the step ratio stays ≥ 1 for three consecutive
    iterations and MaxIterationsError when max_iter is exhausted.
    """
    setup = _box_setup(frame, kind, grid)
    lattice = setup.lattice
    q_box = _omega_to_box(q.values, setup, grid)
    carrier_box = carrier(frame, kind, setup.points)
    xi_sq = float(frame.xi @ frame.xi) if kind is CgoKind.TYPE1 else 0.0
    rhs = np.where(setup.inside, -carrier_box * (xi_sq + q_box), 0.0)

    w = np.zeros_like(rhs)
    history: list[float] = []
    stalled = 0
    for iteration in range(1, max_iter + 1):
        updated = lattice.solve(rhs - q_box * w, workers=workers)
        step = _omega_norm(updated - w, setup)
        w = updated
        if history and step >= history[-1]:
            stalled += 1
        else:
            stalled = 0
        history.append(step)
        if step <= tol:
            break
        if stalled >= STALL_LIMIT:
            ratios = [b / a for a, b in zip(history[-4:-1], history[-3:])]
            raise NoContractionError(frame.rho, ratios)
    else:
        raise MaxIterationsError(max_iter, history[-1])
    print_verbose(
        f"CGO {kind.value} ρ={frame.rho:g}: {iteration} iterations,"
        f" last step {history[-1]:.3g}"
    )

    fixed_point = lattice.solve(rhs - q_box * w, workers=workers)
    ratios = [b / a for a, b in zip(history, history[1:]) if a > 0]
    q_max = float(np.max(np.abs(q.values)))
    estimate = max(ratios) * frame.rho / q_max if ratios and q_max else None

    demodulated = w * np.conj(carrier_box)
    w_omega = _box_to_omega(demodulated, lattice, grid.coordinates) * carrier(
        frame, kind, grid.coordinates
    )
    return _assemble_solution(
        q,
        frame,
        kind,
        w_omega,
        w_L2=_omega_norm(w, setup),
        h2_norm=h2_surrogate(w, setup),
        iterations=iteration,
        fixed_point_residual=_omega_norm(fixed_point - w, setup),
        history=tuple(history),
        box_size=lattice.M,
        contraction_estimate=estimate,
        w_box=w,
    )


def born_cgo(
    q: ScalarField, frame: Frame, kind: CgoKind, grid: Grid
) -> CgoSolution:
    """Born solution with w ≡ 0; the residual still refers to q."""
    return _assemble_solution(
        q,
        frame,
        kind,
        np.zeros(grid.shape, dtype=np.complex128),
        w_L2=0.0,
        h2_norm=0.0,
        iterations=0,
    )


def cgo_traces(
    solution: CgoSolution, grid: Grid
) -> tuple[BoundaryField, BoundaryField]:
    """Dirichlet trace of v and the boundary values of carrier + w."""
    factor = (
        carrier(solution.frame, solution.kind, grid.boundary_points)
        + solution.w.trace().values
    )
    return solution.v.trace(), BoundaryField(factor, grid)


@dataclass(frozen=True, eq=False)
class DecayRow:
    """One ρ of a decay study."""

    rho: float
    w_L2: float
    h2_norm: float
    iterations: int


@dataclass(frozen=True, eq=False)
class DecayTable:
    """Remainder norms against ρ with fitted log-log slopes.

    A slope is None when every norm is exactly zero.
    """

    rows: tuple[DecayRow, ...]
    l2_slope: float | None
    h2_slope: float | None


def fitted_slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Least-squares slope of log y against log x; None if y ≡ 0."""
    values = np.asarray(y, dtype=float)
    if not np.any(values):
        return None
    positive = values > 0
    slope, _ = np.polyfit(
        np.log(np.asarray(x, dtype=float)[positive]),
        np.log(values[positive]),
        1,
    )
    return float(slope)


def decay_study(
    q: ScalarField,
    xi: FloatArray,
    rho_list: Sequence[float],
    grid: Grid,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    workers: int = 1,
) -> DecayTable:
    """Fit ‖w‖_{L²} and its H² surrogate against ρ for type-1 solutions."""
    if len(rho_list) < 3 or any(
        b <= a for a, b in zip(rho_list, rho_list[1:])
    ):
        raise InvalidCgoParameterError(
            "ρ list must be increasing with at least three values"
        )
    rows = []
    for rho in rho_list:
        frame = Frame.for_xi(np.asarray(xi, dtype=float), rho)
        solution = build_cgo(
            q, frame, CgoKind.TYPE1, grid, tol, max_iter, workers=workers
        )
        rows.append(
            DecayRow(rho, solution.w_L2, solution.h2_norm, solution.iterations)
        )
    rhos = [row.rho for row in rows]
    return DecayTable(
        tuple(rows),
        fitted_slope(rhos, [row.w_L2 for row in rows]),
        fitted_slope(rhos, [row.h2_norm for row in rows]),
    )
