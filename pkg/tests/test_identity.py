"""Tests for the boundary pairing, Fourier sampling and reconstruction."""

import math

import numpy as np
import pytest

from calkit.cgo import CgoKind, born_cgo
from calkit.forward import (
    BoundaryField,
    ScalarField,
    dn_map_schrodinger,
    partial_dn_map,
    solve_schrodinger,
)
from calkit.geometry import Frame, Grid, make_grid
from calkit.identity import (
    FrameDirectionError,
    PairingDimensionError,
    SampleMode,
    alessandrini_pair,
    exact_fourier_sample,
    fourier_sample,
    hermitian_average,
    inverse_fourier,
    reconstruct_potential,
    relative_l2_error,
    shadow_term,
    volume_pairing,
    xi_lattice,
)
from calkit.profiles import potential


def test_pairing_of_identical_maps(grid9: Grid) -> None:
    """Equal DN maps pair to zero for any data."""
    dn = dn_map_schrodinger(grid9, potential("bump", grid9))
    f1 = BoundaryField.from_function(grid9, lambda x1, x2, x3: np.exp(x1))
    f2 = BoundaryField.from_function(grid9, lambda x1, x2, x3: x2 + 1j * x3)
    assert alessandrini_pair(dn, dn, f1, f2, grid9) == 0


def test_pairing_is_bilinear(grid9: Grid) -> None:
    """Scaling the data scales the pairing."""
    map_a = dn_map_schrodinger(grid9, potential("bump", grid9))
    map_b = dn_map_schrodinger(grid9, ScalarField.constant(grid9, 0.0))
    f1 = BoundaryField.from_function(grid9, lambda x1, x2, x3: 1 + x1)
    f2 = BoundaryField.from_function(grid9, lambda x1, x2, x3: 1 - x2)
    base = alessandrini_pair(map_a, map_b, f1, f2, grid9)
    scaled = alessandrini_pair(
        map_a, map_b, BoundaryField(3 * f1.values, grid9), f2, grid9
    )
    assert scaled == pytest.approx(3 * base)


def test_pairing_matches_volume_integral(grid13: Grid) -> None:
    """The boundary pairing approximates ∫(q_A − q_B)v₁v₂."""
    q_a = potential("bump", grid13)
    q_b = ScalarField.constant(grid13, 0.0)
    f1 = BoundaryField.from_function(grid13, lambda x1, x2, x3: np.exp(x1))
    f2 = BoundaryField.from_function(grid13, lambda x1, x2, x3: np.exp(-x1))
    boundary = alessandrini_pair(
        dn_map_schrodinger(grid13, q_a),
        dn_map_schrodinger(grid13, q_b),
        f1,
        f2,
        grid13,
    )
    volume = volume_pairing(
        q_a,
        q_b,
        solve_schrodinger(grid13, q_a, f1),
        solve_schrodinger(grid13, q_b, f2),
        grid13,
    )
    assert volume.real > 0
    assert boundary.real == pytest.approx(volume.real, rel=0.05)


def test_pairing_of_cgo_traces_matches_volume_integral() -> None:
    """CGO traces at ρ = 1 pair like the volume integral, within 5%."""
    grid = make_grid(2.0, 1.0, 17, 32)
    q_a = potential("bump", grid)
    q_b = ScalarField.constant(grid, 0.0)
    frame = Frame.for_xi(np.zeros(3), 1.0)
    f1 = born_cgo(q_a, frame, CgoKind.TYPE1, grid).v.trace()
    f2 = born_cgo(q_b, frame, CgoKind.TYPE2, grid).v.trace()
    boundary = alessandrini_pair(
        dn_map_schrodinger(grid, q_a),
        dn_map_schrodinger(grid, q_b),
        f1,
        f2,
        grid,
    )
    volume = volume_pairing(
        q_a,
        q_b,
        solve_schrodinger(grid, q_a, f1),
        solve_schrodinger(grid, q_b, f2),
        grid,
    )
    assert abs(boundary - volume) <= 0.05 * abs(volume)


def test_pairing_dimension_checks(grid9: Grid) -> None:
    """Maps over different rows cannot be paired."""
    dn = dn_map_schrodinger(grid9, ScalarField.constant(grid9, 0.0))
    partial = partial_dn_map(dn, np.arange(5))
    f = BoundaryField(np.ones(grid9.boundary_count), grid9)
    with pytest.raises(PairingDimensionError):
        alessandrini_pair(dn, partial, f, f, grid9)
    other = partial_dn_map(dn, np.arange(1, 6))
    with pytest.raises(PairingDimensionError):
        alessandrini_pair(partial, other, f, f, grid9)


def test_partial_pairing_sums_over_rows(grid9: Grid) -> None:
    """A partial pairing restricts the boundary sum to its rows."""
    map_a = dn_map_schrodinger(grid9, potential("bump", grid9))
    map_b = dn_map_schrodinger(grid9, ScalarField.constant(grid9, 0.0))
    f = BoundaryField(np.ones(grid9.boundary_count), grid9)
    rows = np.arange(grid9.m**2)
    rest = np.arange(grid9.m**2, grid9.boundary_count)
    whole = alessandrini_pair(map_a, map_b, f, f, grid9)
    parts = alessandrini_pair(
        partial_dn_map(map_a, rows), partial_dn_map(map_b, rows), f, f, grid9
    ) + alessandrini_pair(
        partial_dn_map(map_a, rest), partial_dn_map(map_b, rest), f, f, grid9
    )
    assert parts == pytest.approx(whole)


def test_exact_fourier_sample(grid9: Grid) -> None:
    """∫_Ω 1 = 8 and real potentials have Hermitian transforms."""
    one = ScalarField.constant(grid9, 1.0)
    assert exact_fourier_sample(one, np.zeros(3), grid9) == pytest.approx(8.0)
    q = potential("shifted_bump", grid9)
    xi = np.array([math.pi, -math.pi, 0.0])
    assert exact_fourier_sample(q, -xi, grid9) == pytest.approx(
        np.conj(exact_fourier_sample(q, xi, grid9))
    )


def test_xi_lattice_order() -> None:
    """Triples run lexicographically from (−n, −n, −n)."""
    indices, frequencies = xi_lattice(1, 0.5)
    assert len(indices) == 27
    assert indices[0].tolist() == [-1, -1, -1]
    assert indices[1].tolist() == [-1, -1, 0]
    assert indices[-1].tolist() == [1, 1, 1]
    np.testing.assert_allclose(frequencies[-1], [2 * math.pi] * 3)


def test_hermitian_average() -> None:
    """The average is Hermitian symmetric."""
    rng = np.random.default_rng(0)
    cube = rng.standard_normal((3, 3, 3)) + 1j * rng.standard_normal((3, 3, 3))
    average = hermitian_average(cube)
    np.testing.assert_allclose(average, np.conj(average[::-1, ::-1, ::-1]))


def test_inverse_fourier_of_trigonometric_potential(grid9: Grid) -> None:
    """Exact samples of cos(πx₁) invert back to cos(πx₁)."""
    q = ScalarField.from_function(grid9, lambda x1, x2, x3: np.cos(np.pi * x1))
    indices, frequencies = xi_lattice(1, grid9.L)
    samples = np.array(
        [exact_fourier_sample(q, xi, grid9) for xi in frequencies]
    )
    recovered = inverse_fourier(samples, indices, grid9)
    np.testing.assert_allclose(recovered.values, q.values, atol=1e-12)
    error = relative_l2_error(recovered, q, grid9)
    assert error is not None
    assert error < 1e-12


def test_relative_error_of_zero_reference(grid9: Grid) -> None:
    """A vanishing reference has no relative error."""
    zero = ScalarField.constant(grid9, 0.0)
    assert relative_l2_error(zero, zero, grid9) is None


@pytest.mark.parametrize("mode", [SampleMode.FAITHFUL, SampleMode.BORN])
def test_fourier_sample_of_equal_maps(grid9: Grid, mode: SampleMode) -> None:
    """Equal potentials give a zero sample in both modes."""
    q = ScalarField.constant(grid9, 0.0)
    dn = dn_map_schrodinger(grid9, q)
    sample = fourier_sample(
        dn, dn, q, q, np.array([math.pi, 0.0, 0.0]), 4.0, grid9, mode=mode
    )
    assert sample.estimate == 0
    assert sample.mode is mode
    assert len(sample.to_row()) == 8


@pytest.mark.parametrize("workers", [1, 2])
def test_reconstruction_control(grid9: Grid, workers: int) -> None:
    """q_A = q_B reconstructs the zero difference."""
    q = ScalarField.constant(grid9, 0.0)
    dn = dn_map_schrodinger(grid9, q)
    result = reconstruct_potential(
        dn, dn, q, q, 1, 4.0, grid9, workers=workers
    )
    assert result.failed == ()
    assert result.norm <= 1e-8
    assert result.error is None
    assert len(result.samples) == 27
    assert all(sample is not None for sample in result.samples)


def test_shadow_term_of_equal_potentials(grid9: Grid) -> None:
    """q₁ = q₂ leaves nothing to pair."""
    q = potential("bump", grid9)
    frame = Frame.for_xi(np.zeros(3), 4.0)
    report = shadow_term(q, q, frame, frame.eta1, 0.25, grid9)
    assert report.value == 0
    assert report.full_value == 0
    assert report.u_nodes == grid9.m**2 - 4
    assert report.u_nodes + report.v_nodes == grid9.boundary_count


def test_shadow_term_partition(grid9: Grid) -> None:
    """The U and V pairings add up to the full boundary pairing."""
    q1 = potential("bump", grid9)
    q2 = ScalarField.constant(grid9, 0.0)
    frame = Frame.for_xi(np.zeros(3), 4.0)
    report = shadow_term(q1, q2, frame, frame.eta1, 0.25, grid9)
    assert report.value + report.v_value == pytest.approx(report.full_value)
    assert report.interior_term > 0
    assert set(report.to_record()) >= {"U", "V", "full", "rho"}


def test_shadow_term_needs_nearby_direction(grid9: Grid) -> None:
    """η must lie within ε of η₁."""
    q = potential("bump", grid9)
    frame = Frame.for_xi(np.zeros(3), 4.0)
    with pytest.raises(FrameDirectionError):
        shadow_term(q, q, frame, np.array([0.0, 1.0, 0.0]), 0.25, grid9)
