"""Boundary pairing identity, Fourier sampling and reconstruction.

For solutions v₁ of (−Δ + q_A)v₁ = 0 and v₂ of (−Δ + q_B)v₂ = 0 with
traces f₁, f₂, Green's formula gives

    ∮ ((Λ_A − Λ_B)f₁) f₂ dσ = ∫_Ω (q_A − q_B) v₁ v₂ dx,

with no complex conjugation. Pairing a type-1 CGO for q_A with a type-2
CGO for q_B on the frame of ξ makes v₁v₂ = e^{−iξ·x}(1 + O(1/ρ)), so the
pairing samples the Fourier transform of q_A − q_B at ξ.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from calkit.cgo import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
    CgoError,
    CgoKind,
    born_cgo,
    build_cgo,
)
from calkit.console import print_verbose, print_warning
from calkit.errors import CalkitError
from calkit.forward import (
    BoundaryField,
    ScalarField,
    SolverError,
    neumann_trace,
    solve_dirichlet_source,
)
from calkit.geometry import Frame, face_split, integrate

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from calkit.cgo import CgoSolution
    from calkit.forward import DnMap
    from calkit.geometry import FloatArray, Grid, IntArray


class IdentityError(CalkitError):
    """Base exception for pairing and reconstruction."""


class PairingDimensionError(IdentityError, ValueError):
    """Error when DN maps and boundary data do not line up."""

    def __init__(self, detail: str) -> None:
        """Initialize with the mismatch."""
        super().__init__(f"Dimension mismatch: {detail}")


class FrameDirectionError(IdentityError, ValueError):
    """Error when η₁ is not within ε of the split direction η."""

    def __init__(self, distance: float, epsilon: float) -> None:
        """Initialize with |η₁ − η| and ε."""
        super().__init__(
            f"|η₁ − η| = {distance:.3g} must be smaller than ε = {epsilon:g}"
        )


class SampleMode(str, Enum):
    """CGO construction for Fourier sampling."""

    FAITHFUL = "faithful"
    BORN = "born"


def alessandrini_pair(
    map_a: DnMap,
    map_b: DnMap,
    f1: BoundaryField,
    f2: BoundaryField,
    grid: Grid,
) -> complex:
    """Σ_b W_b ((Λ_A − Λ_B)f₁)_b (f₂)_b over the rows of the maps.

    The sign is that of ∫_Ω (q_A − q_B)v₁v₂ dx. Partial maps restrict the
    sum to their rows.
    """
    if map_a.matrix.shape != map_b.matrix.shape:
        raise PairingDimensionError(
            f"DN maps {map_a.matrix.shape} and {map_b.matrix.shape}"
        )
    rows = map_a.row_nodes
    if not np.array_equal(rows, map_b.row_nodes):
        raise PairingDimensionError("DN maps cover different rows")
    nb = grid.boundary_count
    if map_a.matrix.shape[1] != nb:
        raise PairingDimensionError(
            f"DN map has {map_a.matrix.shape[1]} columns"
        )
    for f in (f1, f2):
        if f.values.shape != (nb,):
            raise PairingDimensionError(f"boundary data {f.values.shape}")
    difference = (map_a.matrix - map_b.matrix) @ f1.values
    return complex(np.sum(grid.weights[rows] * difference * f2.values[rows]))


def volume_pairing(
    q_a: ScalarField,
    q_b: ScalarField,
    v1: ScalarField,
    v2: ScalarField,
    grid: Grid,
) -> complex:
    """Trapezoid quadrature of ∫_Ω (q_A − q_B)v₁v₂ dx."""
    integrand = (q_a.values - q_b.values) * v1.values * v2.values
    return complex(integrate(integrand, grid))


def exact_fourier_sample(
    q: ScalarField, xi: FloatArray, grid: Grid
) -> complex:
    """Trapezoid quadrature of ∫_Ω q e^{−ix·ξ} dx."""
    phase = np.exp(-1j * (grid.coordinates @ np.asarray(xi, dtype=float)))
    return complex(integrate(q.values * phase, grid))


@dataclass(frozen=True, eq=False)
class FourierSample:
    """Estimate of the Fourier transform of q_A − q_B at ξ."""

    xi: FloatArray
    rho: float
    mode: SampleMode
    estimate: complex
    residual_a: float
    residual_b: float
    iterations: int

    def to_row(self) -> list[Any]:
        """CSV row (ξ₁, ξ₂, ξ₃, Re, Im, ρ, residuals)."""
        return [
            *self.xi.tolist(),
            self.estimate.real,
            self.estimate.imag,
            self.rho,
            self.residual_a,
            self.residual_b,
        ]


def _cgo_pair(
    q_a: ScalarField,
    q_b: ScalarField,
    frame: Frame,
    grid: Grid,
    mode: SampleMode,
    tol: float,
    max_iter: int,
) -> tuple[CgoSolution, CgoSolution]:
    if mode is SampleMode.BORN:
        return (
            born_cgo(q_a, frame, CgoKind.TYPE1, grid),
            born_cgo(q_b, frame, CgoKind.TYPE2, grid),
        )
    return (
        build_cgo(q_a, frame, CgoKind.TYPE1, grid, tol, max_iter),
        build_cgo(q_b, frame, CgoKind.TYPE2, grid, tol, max_iter),
    )


def fourier_sample(
    map_a: DnMap,
    map_b: DnMap,
    q_a: ScalarField,
    q_b: ScalarField,
    xi: FloatArray,
    rho: float,
    grid: Grid,
    *,
    mode: SampleMode = SampleMode.FAITHFUL,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FourierSample:
    """Pair the traces of type-1 (q_A) and type-2 (q_B) CGO solutions.

    In Born mode the solutions have w ≡ 0 and q_A, q_B only enter the
    reported residuals.
    """
    xi = np.asarray(xi, dtype=float)
    frame = Frame.for_xi(xi, rho)
    first, second = _cgo_pair(q_a, q_b, frame, grid, mode, tol, max_iter)
    estimate = alessandrini_pair(
        map_a, map_b, first.v.trace(), second.v.trace(), grid
    )
    return FourierSample(
        xi=xi,
        rho=rho,
        mode=mode,
        estimate=estimate,
        residual_a=first.residual,
        residual_b=second.residual,
        iterations=first.iterations + second.iterations,
    )


def xi_lattice(xi_max: int, L: float) -> tuple[IntArray, FloatArray]:
    """Integer triples k with |k|_∞ ≤ ξ_max and frequencies (π/L)k.

    Lexicographic order on k, which fixes the order of every table.
    """
    span = range(-xi_max, xi_max + 1)
    triples = list(itertools.product(span, span, span))
    indices = np.array(triples, dtype=np.intp)
    return indices, indices * (math.pi / L)


def _lattice_cube(
    samples: NDArray[np.complex128], indices: IntArray, xi_max: int
) -> NDArray[np.complex128]:
    side = 2 * xi_max + 1
    cube = np.zeros((side, side, side), dtype=np.complex128)
    cube[tuple((indices + xi_max).T)] = samples
    return cube


def hermitian_average(cube: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Average c(k) with conj c(−k) on a cube centered at k = 0."""
    return (cube + np.conj(cube[::-1, ::-1, ::-1])) / 2


def inverse_fourier(
    samples: NDArray[np.complex128],
    indices: IntArray,
    grid: Grid,
    *,
    hermitian: bool = True,
) -> ScalarField:
    """Low-pass inverse of the 2L-periodic Fourier series onto the Ω-grid.

    q(x) ≈ (2L)⁻³ Σ_k q̂(πk/L) e^{iπk·x/L}; the real part is returned.
    """
    xi_max = int(np.max(np.abs(indices))) if len(indices) else 0
    cube = _lattice_cube(np.asarray(samples), indices, xi_max)
    if hermitian:
        cube = hermitian_average(cube)
    k = np.arange(-xi_max, xi_max + 1)
    waves = np.exp(1j * math.pi * np.outer(k, grid.axis) / grid.L)
    values = np.einsum("abc,ai,bj,ck->ijk", cube, waves, waves, waves)
    return ScalarField(np.real(values) / (2 * grid.L) ** 3, grid)


def relative_l2_error(
    estimate: ScalarField, reference: ScalarField, grid: Grid
) -> float | None:
    """‖estimate − reference‖/‖reference‖ in L²(Ω); None if reference ≡ 0."""
    scale = float(integrate(np.abs(reference.values) ** 2, grid))
    if scale == 0:
        return None
    difference = np.abs(estimate.values - reference.values) ** 2
    error = float(integrate(difference, grid))
    return math.sqrt(error / scale)


def l2_norm(values: ScalarField, grid: Grid) -> float:
    """L²(Ω) norm by trapezoid quadrature."""
    return math.sqrt(float(integrate(np.abs(values.values) ** 2, grid)))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Reconstructed potential difference with its error report.

    Failed lattice points contribute zero samples and are listed in
    failed. Errors are relative to q_A − q_B; oracle_error is the error of
    exact samples through the same inversion (the truncation error).
    """

    q_rec: ScalarField
    oracle: ScalarField
    samples: tuple[FourierSample | None, ...]
    indices: IntArray
    failed: tuple[tuple[int, int, int], ...]
    error: float | None
    oracle_error: float | None
    norm: float
    mode: SampleMode
    rho: float
    messages: dict[tuple[int, int, int], str] = field(default_factory=dict)


def reconstruct_potential(
    map_a: DnMap,
    map_b: DnMap,
    q_a: ScalarField,
    q_b: ScalarField,
    xi_max: int,
    rho: float,
    grid: Grid,
    *,
    mode: SampleMode = SampleMode.FAITHFUL,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int = 1,
) -> Reconstruction:
    """Sample every lattice frequency, symmetrize and invert.

    Samples are computed concurrently with workers threads and collected
    in lattice order.
    """
    indices, frequencies = xi_lattice(xi_max, grid.L)

    def sample(xi: FloatArray) -> FourierSample | str:
        try:
            return fourier_sample(
                map_a,
                map_b,
                q_a,
                q_b,
                xi,
                rho,
                grid,
                mode=mode,
                tol=tol,
                max_iter=max_iter,
            )
        except (CgoError, SolverError) as exc:
            return str(exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sample, frequencies))
    else:
        results = [sample(xi) for xi in frequencies]
    print_verbose(f"{len(results)} Fourier samples at ρ={rho:g}")

    values = np.zeros(len(indices), dtype=np.complex128)
    samples: list[FourierSample | None] = []
    messages: dict[tuple[int, int, int], str] = {}
    for n, result in enumerate(results):
        if isinstance(result, str):
            key = (int(indices[n, 0]), int(indices[n, 1]), int(indices[n, 2]))
            messages[key] = result
            print_warning(f"ξ index {key} failed:", result)
            samples.append(None)
        else:
            values[n] = result.estimate
            samples.append(result)

    difference = ScalarField(q_a.values - q_b.values, grid)
    exact = np.array(
        [exact_fourier_sample(difference, xi, grid) for xi in frequencies]
    )
    q_rec = inverse_fourier(values, indices, grid)
    oracle = inverse_fourier(exact, indices, grid)
    return Reconstruction(
        q_rec=q_rec,
        oracle=oracle,
        samples=tuple(samples),
        indices=indices,
        failed=tuple(messages),
        error=relative_l2_error(q_rec, difference, grid),
        oracle_error=relative_l2_error(oracle, difference, grid),
        norm=l2_norm(q_rec, grid),
        mode=mode,
        rho=rho,
        messages=messages,
    )


@dataclass(frozen=True, eq=False)
class ShadowReport:
    """Boundary pairings of the difference solution against v₂.

    value is the pairing over U (away from the illuminated face); the
    pairings over V and over all of ∂Ω add up with it. u1_flux is the
    weighted flux (∫_{U₁} e^{−2ρη₁·x}|∂_νv|² dσ)^{1/2} with
    U₁ = {ν·η₁ ≥ ε}, and interior_term is ∫_Ω e^{−2ρη₁·x}|(q₁ − q₂)v₁|² dx,
    the right-hand side of the Carleman estimate for v.
    """

    value: complex
    v_value: complex
    full_value: complex
    u1_flux: float
    interior_term: float
    rho: float
    u_nodes: int
    v_nodes: int

    def to_record(self) -> dict[str, Any]:
        """Describe the pairings for JSON records."""
        return {
            "rho": self.rho,
            "U": [self.value.real, self.value.imag],
            "V": [self.v_value.real, self.v_value.imag],
            "full": [self.full_value.real, self.full_value.imag],
            "U1_weighted_flux": self.u1_flux,
            "interior_term": self.interior_term,
            "U_nodes": self.u_nodes,
            "V_nodes": self.v_nodes,
        }


def shadow_term(
    q1: ScalarField,
    q2: ScalarField,
    frame: Frame,
    eta: FloatArray,
    epsilon: float,
    grid: Grid,
    *,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ShadowReport:
    """Pair ∂_νv with v₂ over U for the difference problem.

    v solves (−Δ + q₂)v = (q₁ − q₂)v₁ with v = 0 on ∂Ω, v₁ is the type-1
    CGO for q₁ and v₂ the type-2 CGO for q₂ on the same frame.
    """
    eta = np.asarray(eta, dtype=float)
    distance = float(np.linalg.norm(frame.eta1 - eta))
    if distance >= epsilon:
        raise FrameDirectionError(distance, epsilon)
    split = face_split(grid, eta, epsilon)
    first = build_cgo(q1, frame, CgoKind.TYPE1, grid, tol, max_iter)
    second = build_cgo(q2, frame, CgoKind.TYPE2, grid, tol, max_iter)
    source = ScalarField((q1.values - q2.values) * first.v.values, grid)
    zero = BoundaryField(np.zeros(grid.boundary_count), grid)
    v = solve_dirichlet_source(grid, q2, source, zero)
    flux = neumann_trace(v, grid).values
    integrand = grid.weights * flux * second.v.trace().values

    x_b = grid.boundary_points
    decay = np.exp(-2 * frame.rho * (x_b @ frame.eta1))
    u1 = grid.mean_normals @ frame.eta1 >= epsilon
    u1_flux = math.sqrt(
        float(np.sum((grid.weights * decay * np.abs(flux) ** 2)[u1]))
    )
    interior_decay = np.exp(-2 * frame.rho * (grid.coordinates @ frame.eta1))
    interior_term = float(
        integrate(interior_decay * np.abs(source.values) ** 2, grid)
    )
    return ShadowReport(
        value=complex(np.sum(integrand[split.U])),
        v_value=complex(np.sum(integrand[split.V])),
        full_value=complex(np.sum(integrand)),
        u1_flux=u1_flux,
        interior_term=interior_term,
        rho=frame.rho,
        u_nodes=len(split.U),
        v_nodes=len(split.V),
    )


def shadow_decay(
    q1: ScalarField,
    q2: ScalarField,
    xi: FloatArray,
    rho_list: Sequence[float],
    eta: FloatArray,
    epsilon: float,
    grid: Grid,
    *,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[ShadowReport]:
    """shadow_term over increasing ρ on the frame of ξ."""
    reports = []
    for rho in rho_list:
        frame = Frame.for_xi(np.asarray(xi, dtype=float), rho)
        reports.append(
            shadow_term(
                q1, q2, frame, eta, epsilon, grid, tol=tol, max_iter=max_iter
            )
        )
    return reports
