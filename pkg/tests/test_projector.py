import numpy as np
import pytest

from bloch_wannier import fixtures
from bloch_wannier.bloch import PlaneWaveBasis, solve_grid
from bloch_wannier.errors import ConfigError, DimensionError, GapError
from bloch_wannier.projector import (
    KGrid,
    RelevantSet,
    all_derivatives,
    boundary_embedding,
    build_projector_field,
    gap_report,
    max_neighbor_difference,
    projector_derivative,
    q_tilde,
    shifted_frames,
    w_tilde,
)


def _grid_energies(model, basis, grid):
    solutions = solve_grid(model, basis, grid.points().reshape(-1, grid.dimension))
    return np.array([s.energies for s in solutions]).reshape(grid.shape + (basis.size,))


def test_centered_grid_has_zero_at_middle():
    grid = KGrid((4, 6), centered=True)
    assert grid.origin == (2, 3)
    assert np.allclose(grid.kappa(grid.origin), 0.0)
    assert grid.points()[0, 0].tolist() == [-0.5, -0.5]


def test_centered_grid_needs_even_counts():
    with pytest.raises(ConfigError):
        KGrid((5,), centered=True)


def test_negate_uncentered():
    grid = KGrid((4,))
    index, shifts = grid.negate((1,))
    assert index == (3,)
    assert shifts.tolist() == [-1]
    assert grid.kappa(index) + shifts == pytest.approx(-grid.kappa((1,)))


def test_negate_centered_corner_wraps():
    grid = KGrid((4, 4), centered=True)
    index, shifts = grid.negate((0, 2))
    assert index == (0, 2)
    assert shifts.tolist() == [1, 0]


def test_step_reports_crossing():
    grid = KGrid((4, 4))
    assert grid.step((3, 1), 0, +1) == ((0, 1), 1)
    assert grid.step((0, 1), 0, -1) == ((3, 1), -1)
    assert grid.step((1, 1), 1, +1) == ((1, 2), 0)


def test_relevant_set():
    relevant = RelevantSet((2, 0, 2))
    assert relevant.bands == (0, 2)
    assert relevant.m == 2
    assert relevant.complement(4) == [1, 3]
    with pytest.raises(ConfigError):
        relevant.check(2)
    with pytest.raises(ConfigError):
        RelevantSet(())


def test_free_bands_touch_at_corner():
    grid = KGrid((4, 4))
    energies = _grid_energies(fixtures.free(2), PlaneWaveBasis(2, 2), grid)
    report = gap_report(energies, RelevantSet.lowest(1), grid)
    assert not report.passed
    assert report.value <= 1e-10
    assert 0.5 in report.location


def test_free_field_refused_with_gap_details():
    with pytest.raises(GapError) as info:
        build_projector_field(fixtures.free(2), PlaneWaveBasis(2, 2), KGrid((4, 4)), RelevantSet.lowest(1))
    assert info.value.details["gap"]["passed"] is False


def test_cos2d_gap_is_open(cos2d_field):
    assert cos2d_field.gap.passed
    assert cos2d_field.gap.value > 1.0


def test_all_bands_have_infinite_gap():
    grid = KGrid((2,))
    energies = _grid_energies(fixtures.cos1d(), PlaneWaveBasis(1, 1), grid)
    report = gap_report(energies, RelevantSet.lowest(3), grid)
    assert report.passed
    assert report.value == float("inf")


def test_projector_invariants(cos2d_field):
    idem, herm, trace = cos2d_field.invariant_residuals()
    assert idem <= 1e-10
    assert herm <= 1e-10
    assert trace <= 1e-10


def test_synthetic_invariants(skyrmion):
    assert max(skyrmion.invariant_residuals()) <= 1e-10


def test_projector_is_continuous(cos2d):
    basis = PlaneWaveBasis(2, 3)
    relevant = RelevantSet.lowest(1)
    coarse = build_projector_field(cos2d, basis, KGrid((8, 8)), relevant)
    fine = build_projector_field(cos2d, basis, KGrid((16, 16)), relevant)
    assert max_neighbor_difference(fine) < max_neighbor_difference(coarse)


def test_boundary_embedding_residual_shrinks_with_cutoff(cos2d):
    relevant = RelevantSet.lowest(1)
    residuals = []
    for cutoff in (2, 4):
        field = build_projector_field(cos2d, PlaneWaveBasis(2, cutoff), KGrid((4, 4)), relevant)
        report = boundary_embedding(field, 0)
        assert report.matrix.shape == (field.size, field.size)
        residuals.append(report.residual)
    assert residuals[1] < residuals[0]
    assert residuals[1] < 1e-2


def test_constant_field_has_zero_derivative():
    field = fixtures.constant_field(KGrid((4, 4)))
    assert np.allclose(projector_derivative(field, 0), 0.0)


def test_derivative_needs_four_points():
    field = fixtures.constant_field(KGrid((3, 4)))
    with pytest.raises(ConfigError):
        projector_derivative(field, 0)


def test_derivative_is_hermitian(skyrmion):
    D = projector_derivative(skyrmion, 1)
    assert np.allclose(D, np.swapaxes(D.conj(), -1, -2))


def test_q_tilde_on_diagonal_vanishes(skyrmion):
    assert not np.any(q_tilde(skyrmion, 1, 1))


def test_w_tilde_of_constant_field():
    field = fixtures.constant_field(KGrid((4, 4, 4, 4)), size=4, rank=2)
    trace, imaginary = w_tilde(field)
    assert np.allclose(trace, 0.0)
    assert imaginary == 0.0


def test_w_tilde_needs_four_dimensions(skyrmion):
    with pytest.raises(DimensionError):
        w_tilde(skyrmion)


def test_w_tilde_of_degree_zero_dirac_map():
    field = fixtures.dirac_field(KGrid((6, 6, 6, 6)), 5.0)
    trace, imaginary = w_tilde(field, all_derivatives(field))
    assert abs(trace.mean()) / (2 * np.pi) ** 2 < 0.1
    assert imaginary <= 1e-8


def test_shifted_frames_with_identity_embeddings(skyrmion):
    frames = skyrmion.all_frames()
    assert np.array_equal(shifted_frames(skyrmion, frames, 0), np.roll(frames, -1, axis=0))
