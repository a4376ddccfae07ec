"""Tests for the Poincaré, conjugated and Carleman inequalities."""

import math

import numpy as np
import pytest

from calkit.carleman import (
    BoundaryTraceError,
    ComplexTestFunctionError,
    WeightOverflowError,
    calibrate_constant,
    carleman_estimate,
    conjugated_inequality,
    poincare_ratio,
    proof_constant,
    proof_identities,
    random_test_function,
    seeded_corpus,
    sine_mode,
)
from calkit.forward import ScalarField
from calkit.geometry import Grid, ball_radius, make_grid
from calkit.lcg import Lcg
from calkit.profiles import potential

E1 = np.array([1.0, 0.0, 0.0])


@pytest.fixture
def grid17() -> Grid:
    """Ω-grid with m = 17."""
    return make_grid(2.0, 1.0, 17, 32)


def test_poincare_of_zero(grid9: Grid) -> None:
    """Zero has zero on both sides."""
    sides = poincare_ratio(ScalarField.constant(grid9, 0.0), E1, grid9)
    assert (sides.lhs, sides.rhs) == (0.0, 0.0)
    assert sides.holds


def test_poincare_sine_mode(grid17: Grid) -> None:
    """The lowest sine mode sits near the sharp constant (2L/π)²."""
    sides = poincare_ratio(sine_mode(grid17), E1, grid17)
    assert sides.holds
    gradient = sides.rhs / (4 * ball_radius(grid17) ** 2)
    sharp = (2 * grid17.L / math.pi) ** 2
    assert sharp <= sides.lhs / gradient <= 1.3 * sharp


def test_poincare_random_corpus(grid9: Grid) -> None:
    """Seeded test functions all satisfy the inequality."""
    direction = np.array([1.0, 2.0, -2.0]) / 3
    for w in seeded_corpus(Lcg(1), grid9, 20):
        assert poincare_ratio(w, direction, grid9).holds


def test_poincare_rejects_boundary_values(grid9: Grid) -> None:
    """Test functions must vanish on ∂Ω."""
    with pytest.raises(BoundaryTraceError):
        poincare_ratio(ScalarField.constant(grid9, 1.0), E1, grid9)


def test_random_test_function_is_seeded(grid9: Grid) -> None:
    """Equal seeds give equal functions with zero trace."""
    first = random_test_function(Lcg(5), grid9)
    second = random_test_function(Lcg(5), grid9)
    np.testing.assert_array_equal(first.values, second.values)
    assert not np.any(first.trace().values)
    third = random_test_function(Lcg(6), grid9)
    assert not np.array_equal(first.values, third.values)


@pytest.mark.parametrize("rho", [2.0, 4.0, 8.0])
def test_conjugated_inequality_sine_mode(rho: float) -> None:
    """The constant-free inequality holds for the sine mode."""
    grid = make_grid(2.0, 1.0, 25, 32)
    report = conjugated_inequality(sine_mode(grid), rho, E1, grid)
    assert report.holds
    assert report.margin > 0
    assert report.boundary is not None


@pytest.mark.parametrize("rho", [2.0, 4.0])
def test_conjugated_inequality_random_corpus(grid17: Grid, rho: float) -> None:
    """Seeded test functions satisfy the constant-free inequality."""
    for v in seeded_corpus(Lcg(1), grid17, 5):
        assert conjugated_inequality(v, rho, E1, grid17).holds


def test_conjugated_inequality_of_zero(grid9: Grid) -> None:
    """Zero has zero on both sides."""
    report = conjugated_inequality(
        ScalarField.constant(grid9, 0.0), 3.0, E1, grid9
    )
    assert (report.lhs, report.rhs) == (0.0, 0.0)


def test_conjugated_inequality_needs_real_function(grid9: Grid) -> None:
    """Complex test functions are refused."""
    v = ScalarField(1j * sine_mode(grid9).values, grid9)
    with pytest.raises(ComplexTestFunctionError):
        conjugated_inequality(v, 2.0, E1, grid9)


def test_second_identity_vanishes(grid17: Grid) -> None:
    """2ρ³∫w(η₁·∇w) telescopes to zero."""
    identities = proof_identities(sine_mode(grid17), 2.0, E1, grid17)
    assert abs(identities.i2) < 1e-10


def test_first_identity_converges() -> None:
    """Volume and boundary forms of I₁ approach each other under refinement."""
    discrepancies = []
    for m in (17, 33):
        grid = make_grid(2.0, 1.0, m, 32)
        identities = proof_identities(sine_mode(grid), 2.0, E1, grid)
        discrepancies.append(identities.i1_discrepancy)
    assert discrepancies[0] / discrepancies[1] >= 1.3


def test_proof_constant(grid9: Grid) -> None:
    """C₀ = 8·3L² + 1."""
    assert proof_constant(grid9) == pytest.approx(25.0)


def test_carleman_of_zero(grid9: Grid) -> None:
    """v = 0 balances trivially and reports the default constant."""
    q = potential("bump", grid9, amplitude=0.5)
    report = carleman_estimate(
        ScalarField.constant(grid9, 0.0), q, 4.0, E1, grid9, rho1=1.0
    )
    assert report.lhs == report.rhs == 0.0
    assert report.ratio == 0.0
    assert report.holds
    assert report.C_used == pytest.approx(100.0)
    assert report.rho2 == pytest.approx(2 * 10.0 * 0.5 + 1.0)
    assert report.below_threshold


def test_carleman_sine_mode_free_potential(grid17: Grid) -> None:
    """With q = 0 every ρ is above the threshold and the estimate holds."""
    q = ScalarField.constant(grid17, 0.0)
    report = carleman_estimate(sine_mode(grid17), q, 8.0, E1, grid17)
    assert report.rho2 == 0.0
    assert not report.below_threshold
    assert report.holds


def test_calibrated_constant(grid9: Grid) -> None:
    """The calibrated constant is a power of two covering the corpus."""
    q = potential("bump", grid9, amplitude=0.5)
    corpus = [sine_mode(grid9), *seeded_corpus(Lcg(2), grid9, 4)]
    constant = calibrate_constant(corpus, q, 4.0, E1, grid9)
    assert constant >= 1
    assert math.log2(constant) == int(math.log2(constant))
    for v in corpus:
        report = carleman_estimate(v, q, 4.0, E1, grid9, constant=constant)
        assert report.holds


def test_weight_overflow(grid9: Grid) -> None:
    """ρ beyond the exponent range is refused."""
    with pytest.raises(WeightOverflowError):
        carleman_estimate(
            sine_mode(grid9),
            ScalarField.constant(grid9, 0.0),
            1000.0,
            E1,
            grid9,
        )
