"""Directional Poincaré inequality and the linear-weight Carleman estimate.

All inequalities are evaluated for functions vanishing on ∂Ω. Volume
integrals are node sums over interior nodes times h³, boundary terms use
the one-sided normal derivative on each incident face with that face's
trapezoid weight, and e^{−2ρx·η₁} is evaluated exactly at the nodes.

For w = e^{−ρx·η₁}v the conjugated operator is P = Δ + 2ρη₁·∇ + ρ²; the
boundary of Ω splits into ∂Ω₊ = {η₁·ν ≥ 0} and ∂Ω₋ = {η₁·ν ≤ 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from calkit.console import print_verbose
from calkit.errors import CalkitError
from calkit.forward import ScalarField, face_derivatives, schrodinger_system
from calkit.geometry import FACE_NORMALS, ball_radius
from calkit.liouville import first_difference, second_difference

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from calkit.geometry import FloatArray, Grid
    from calkit.lcg import Lcg

TRACE_TOLERANCE = 1e-12
EXPONENT_CAP = 700.0
CORPUS_BUMPS = 3


class CarlemanError(CalkitError):
    """Base exception for the inequality evaluators."""


class BoundaryTraceError(CarlemanError, ValueError):
    """Error when a test function does not vanish on ∂Ω."""

    def __init__(self, maximum: float) -> None:
        """Initialize with the largest boundary value."""
        self.maximum = maximum
        super().__init__(
            f"test function must vanish on ∂Ω, max |trace| = {maximum:.3g}"
        )


class ComplexTestFunctionError(CarlemanError, ValueError):
    """Error when a real-valued test function is required."""

    def __init__(self) -> None:
        """Initialize with a predefined message."""
        super().__init__("conjugated inequality takes real-valued v")


class WeightOverflowError(CarlemanError):
    """Error when e^{2ρ|x·η₁|} leaves the floating-point range."""

    def __init__(self, rho: float, cap: float) -> None:
        """Initialize with ρ and the largest admissible ρ."""
        self.rho = rho
        super().__init__(f"ρ={rho:g} overflows the weight, use ρ ≤ {cap:.4g}")


def _check_trace(v: ScalarField) -> None:
    trace = np.abs(v.trace().values)
    scale = max(1.0, float(np.max(np.abs(v.values))))
    maximum = float(np.max(trace))
    if maximum > TRACE_TOLERANCE * scale:
        raise BoundaryTraceError(maximum)


def _interior(values: NDArray[Any]) -> NDArray[Any]:
    return values[1:-1, 1:-1, 1:-1]


def _volume(values: NDArray[Any], grid: Grid) -> float:
    """Σ over interior nodes of values·h³."""
    return float(np.sum(_interior(values))) * grid.h**3


def directional_derivative(
    values: NDArray[Any], eta: FloatArray, grid: Grid
) -> NDArray[Any]:
    """η·∇_h by centered differences (one-sided on the boundary)."""
    return sum(
        eta[axis] * first_difference(values, axis, grid.h)
        for axis in range(3)
    )


def laplacian(values: NDArray[Any], grid: Grid) -> NDArray[Any]:
    """7-point Laplacian, exact stencil at interior nodes."""
    return sum(second_difference(values, axis, grid.h) for axis in range(3))


@dataclass(frozen=True)
class BoundaryTerms:
    """Face-wise Σ W_f |∂_f w|² |η₁·ν_f| on ∂Ω₊ and ∂Ω₋.

    The edge_* parts are the contributions of nodes shared by two or more
    faces, already included in the totals.
    """

    plus: float
    minus: float
    edge_plus: float
    edge_minus: float


def boundary_terms(
    w: ScalarField,
    eta: FloatArray,
    grid: Grid,
    weight: FloatArray | None = None,
) -> BoundaryTerms:
    """Weighted boundary flux terms, optionally times a nodal weight."""
    derivatives = np.abs(face_derivatives(w, grid)) ** 2
    terms = derivatives * grid.face_weights
    if weight is not None:
        terms = terms * weight[:, None]
    dots = FACE_NORMALS @ eta
    plus = terms[:, dots > 0] * dots[dots > 0]
    minus = terms[:, dots < 0] * -dots[dots < 0]
    edges = grid.edge_mask
    return BoundaryTerms(
        plus=float(np.sum(plus)),
        minus=float(np.sum(minus)),
        edge_plus=float(np.sum(plus[edges])),
        edge_minus=float(np.sum(minus[edges])),
    )


@dataclass(frozen=True)
class InequalitySides:
    """Both sides of an inequality lhs ≤ rhs."""

    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        """Check lhs ≤ rhs."""
        return self.lhs <= self.rhs

    @property
    def margin(self) -> float:
        """rhs − lhs."""
        return self.rhs - self.lhs

    @property
    def defect(self) -> float:
        """max(0, lhs − rhs) relative to rhs."""
        return max(0.0, self.lhs - self.rhs) / max(self.rhs, 1e-300)


def poincare_ratio(
    w: ScalarField, eta1: FloatArray, grid: Grid
) -> InequalitySides:
    """∫|w|² against 4R²∫|η₁·∇w|², R the radius of a ball holding Ω."""
    _check_trace(w)
    eta1 = np.asarray(eta1, dtype=float)
    gradient = directional_derivative(w.values, eta1, grid)
    constant = 4 * ball_radius(grid) ** 2
    return InequalitySides(
        lhs=_volume(np.abs(w.values) ** 2, grid),
        rhs=constant * _volume(np.abs(gradient) ** 2, grid),
    )


@dataclass(frozen=True)
class ConjugatedReport(InequalitySides):
    """Sides of the conjugated inequality with their ingredients."""

    gradient_term: float = 0.0
    operator_term: float = 0.0
    boundary: BoundaryTerms | None = None


def _conjugate(v: ScalarField, rho: float, eta1: FloatArray) -> ScalarField:
    weight = np.exp(-rho * (v.grid.coordinates @ eta1))
    return ScalarField(np.real(v.values) * weight, v.grid)


def _check_real(v: ScalarField) -> None:
    if not v.is_real:
        raise ComplexTestFunctionError


def conjugated_inequality(
    v: ScalarField, rho: float, eta1: FloatArray, grid: Grid
) -> ConjugatedReport:
    """ρ²∫|η₁·∇w|² + 2ρ∫_{∂Ω₊} against ∫|Pw|² + 2ρ∫_{∂Ω₋}.

    The boundary integrands are |∂_νw|²|η₁·ν| with w = e^{−ρx·η₁}v. The
    inequality carries no constant.
    """
    _check_trace(v)
    _check_real(v)
    eta1 = np.asarray(eta1, dtype=float)
    _check_weight(rho, eta1, grid)
    w = _conjugate(v, rho, eta1)
    gradient = directional_derivative(w.values, eta1, grid)
    conjugated = (
        laplacian(w.values, grid) + 2 * rho * gradient + rho**2 * w.values
    )
    gradient_term = _volume(gradient**2, grid)
    operator_term = _volume(conjugated**2, grid)
    boundary = boundary_terms(w, eta1, grid)
    return ConjugatedReport(
        lhs=rho**2 * gradient_term + 2 * rho * boundary.plus,
        rhs=operator_term + 2 * rho * boundary.minus,
        gradient_term=gradient_term,
        operator_term=operator_term,
        boundary=boundary,
    )


@dataclass(frozen=True)
class ProofIdentities:
    """Integration-by-parts identities behind the conjugated inequality.

    i1_volume = 2ρ∫Δw(η₁·∇w) should match
    i1_boundary = ρ∮|∂_νw|²(η₁·ν), and i2 = 2ρ³∫w(η₁·∇w) should vanish.
    """

    i1_volume: float
    i1_boundary: float
    i2: float

    @property
    def i1_discrepancy(self) -> float:
        """|I₁ volume − I₁ boundary|."""
        return abs(self.i1_volume - self.i1_boundary)


def proof_identities(
    v: ScalarField, rho: float, eta1: FloatArray, grid: Grid
) -> ProofIdentities:
    """Evaluate I₁ in volume and boundary form, and I₂."""
    _check_trace(v)
    _check_real(v)
    eta1 = np.asarray(eta1, dtype=float)
    _check_weight(rho, eta1, grid)
    w = _conjugate(v, rho, eta1)
    gradient = directional_derivative(w.values, eta1, grid)
    boundary = boundary_terms(w, eta1, grid)
    transport = _volume(laplacian(w.values, grid) * gradient, grid)
    return ProofIdentities(
        i1_volume=2 * rho * transport,
        i1_boundary=rho * (boundary.plus - boundary.minus),
        i2=2 * rho**3 * _volume(w.values * gradient, grid),
    )


def proof_constant(grid: Grid) -> float:
    """C₀ = 8R² + 1 for q = 0, R the radius of a ball holding Ω.

    The conjugated inequality and the Poincaré constant 4R² give
    ρ²∫|w|² + ρ∫_{∂Ω₊} ≤ (4R² + 1/2)(∫|Pw|² + 2ρ∫_{∂Ω₋}).
    """
    return 8 * ball_radius(grid) ** 2 + 1


def rho_cap(eta1: FloatArray, grid: Grid) -> float:
    """Largest ρ keeping e^{2ρ|x·η₁|} finite on Ω."""
    reach = float(np.max(np.abs(grid.coordinates @ np.asarray(eta1))))
    return EXPONENT_CAP / (2 * reach) if reach else math.inf


def _check_weight(rho: float, eta1: FloatArray, grid: Grid) -> None:
    cap = rho_cap(eta1, grid)
    if rho > cap:
        raise WeightOverflowError(rho, cap)


@dataclass(frozen=True)
class CarlemanReport:
    """Both sides of the Carleman estimate lhs ≤ C·rhs.

    rho2 = 2√C‖q‖_∞ + ρ₁ is the threshold above which the estimate is
    guaranteed; below it the report is still produced.
    """

    lhs: float
    rhs: float
    C_used: float
    rho2: float
    rho: float
    edge_lhs: float = 0.0
    edge_rhs: float = 0.0

    @property
    def holds(self) -> bool:
        """Check lhs ≤ C·rhs."""
        return self.lhs <= self.C_used * self.rhs

    @property
    def below_threshold(self) -> bool:
        """Check ρ < ρ₂."""
        return self.rho < self.rho2

    @property
    def ratio(self) -> float:
        """lhs / rhs (0 when both vanish)."""
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs


def carleman_estimate(
    v: ScalarField,
    q: ScalarField,
    rho: float,
    eta1: FloatArray,
    grid: Grid,
    *,
    constant: float | None = None,
    rho1: float = 0.0,
) -> CarlemanReport:
    """Weighted estimate for (−Δ + q)v with the weight e^{−2ρx·η₁}.

    constant defaults to 4C₀ with C₀ from proof_constant, which the
    estimate satisfies for ρ ≥ ρ₂.
    """
    _check_trace(v)
    eta1 = np.asarray(eta1, dtype=float)
    _check_weight(rho, eta1, grid)
    c_used = 4 * proof_constant(grid) if constant is None else constant
    q_max = float(np.max(np.abs(q.values)))
    rho2 = 2 * math.sqrt(c_used) * q_max + rho1

    weight = np.exp(-2 * rho * (grid.coordinates @ eta1))
    dtype = np.result_type(v.values, q.values)
    residual = np.zeros(grid.node_count, dtype=dtype)
    residual[grid.interior_flat] = schrodinger_system(grid, q).apply(v.values)
    residual_sq = np.abs(residual.reshape(grid.shape)) ** 2
    boundary = boundary_terms(
        v, eta1, grid, weight.ravel()[grid.boundary_flat]
    )
    report = CarlemanReport(
        lhs=rho**2 * _volume(weight * np.abs(v.values) ** 2, grid)
        + rho * boundary.plus,
        rhs=_volume(weight * residual_sq, grid) + rho * boundary.minus,
        C_used=c_used,
        rho2=rho2,
        rho=rho,
        edge_lhs=rho * boundary.edge_plus,
        edge_rhs=rho * boundary.edge_minus,
    )
    print_verbose(
        f"Carleman ρ={rho:g}: lhs {report.lhs:.4g}, rhs {report.rhs:.4g}"
    )
    return report


def calibrate_constant(
    corpus: Sequence[ScalarField],
    q: ScalarField,
    rho: float,
    eta1: FloatArray,
    grid: Grid,
) -> float:
    """Smallest power of two C with lhs ≤ C·rhs over the corpus."""
    worst = 0.0
    for v in corpus:
        report = carleman_estimate(v, q, rho, eta1, grid, constant=1.0)
        worst = max(worst, report.ratio)
    if not math.isfinite(worst):
        msg = "calibration corpus has a test function with rhs = 0"
        raise CarlemanError(msg)
    return 2.0 ** max(0, math.ceil(math.log2(worst))) if worst > 0 else 1.0


def sine_mode(grid: Grid) -> ScalarField:
    """Π_i sin(π(x_i + L)/(2L)), zero on ∂Ω."""
    return ScalarField.from_function(
        grid,
        lambda x1, x2, x3: np.prod(
            [
                np.sin(math.pi * (x + grid.L) / (2 * grid.L))
                for x in (x1, x2, x3)
            ],
            axis=0,
        ),
    )


def random_test_function(
    rng: Lcg, grid: Grid, bumps: int = CORPUS_BUMPS
) -> ScalarField:
    """Seeded Gaussian bumps times Π(1 − x_i²/L²), zero on ∂Ω."""
    L = grid.L
    x = grid.coordinates
    values = np.zeros(grid.shape)
    for _ in range(bumps):
        center = np.array(
            [rng.uniform_range(-0.6 * L, 0.6 * L) for _ in range(3)]
        )
        width = rng.uniform_range(0.15 * L, 0.4 * L)
        amplitude = rng.uniform_range(-1.0, 1.0)
        distance = np.sum((x - center) ** 2, axis=-1)
        values += amplitude * np.exp(-distance / (2 * width**2))
    cutoff = np.prod(1 - (x / L) ** 2, axis=-1)
    return ScalarField(values * cutoff, grid)


def seeded_corpus(rng: Lcg, grid: Grid, count: int) -> list[ScalarField]:
    """count seeded zero-trace test functions."""
    return [random_test_function(rng, grid) for _ in range(count)]
