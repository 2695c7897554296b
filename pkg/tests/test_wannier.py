import numpy as np
import pytest

from bloch_wannier import fixtures
from bloch_wannier.bloch import PlaneWaveBasis
from bloch_wannier.errors import (
    ConfigError,
    GridTooCoarseError,
    ObstructionError,
    TransportBreakdownError,
    TrialFailureError,
    WindingObstructionError,
)
from bloch_wannier.projector import KGrid, ProjectorField, RelevantSet, build_projector_field
from bloch_wannier.symmetry import plain_conjugation, time_reversal
from bloch_wannier.wannier import (
    MASS_FLOOR,
    check_mismatch_phase,
    decay_fit,
    fit_shell_decay,
    gauge_smoothness,
    gaussian_trials,
    inverse_bf,
    loop_holonomy,
    multiband_projection_gauge,
    orthonormalize,
    parallel_transport,
    rank1_trs_gauge,
    translate_overlaps,
    trs_fix_origin,
)


def _cos2d_gauge(counts, model=None, cutoff=3):
    model = model or fixtures.cos2d(5.0)
    basis = PlaneWaveBasis(2, cutoff)
    field = build_projector_field(model, basis, KGrid(counts, centered=True), RelevantSet.lowest(1))
    return rank1_trs_gauge(field, time_reversal(model, basis))


@pytest.fixture(scope="module")
def cos2d_section():
    return _cos2d_gauge((8, 8))


@pytest.fixture(scope="module")
def fine_sections():
    return {n: _cos2d_gauge((n, n)) for n in (32, 64)}


def test_fixed_vector_is_real_under_conjugation():
    J = plain_conjugation(2)
    psi = np.exp(1j * np.pi / 3) * np.array([1.0, 2.0]) / np.sqrt(5)
    phi = trs_fix_origin(psi, J)
    assert np.allclose(J.apply(phi), phi)
    assert np.linalg.norm(phi) == pytest.approx(1.0)


def test_fixed_vector_for_imaginary_input():
    phi = trs_fix_origin(np.array([1j, 0.0]), plain_conjugation(2))
    assert np.allclose(np.abs(phi), [1.0, 0.0])


def test_orthonormalize():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))
    Q = orthonormalize(vectors)
    assert np.allclose(Q.conj().T @ Q, np.eye(2))
    # same span
    assert np.allclose(Q @ Q.conj().T @ vectors, vectors)


def test_orthonormalize_refuses_collapsed_frame():
    with pytest.raises(TransportBreakdownError):
        orthonormalize(np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]))


def test_transport_on_constant_field():
    field = fixtures.constant_field(KGrid((4, 4)))
    start = np.array([1.0, 0.0])
    frames = parallel_transport(field, start, (0, 0), [(0, 1), (1, 1), (0, -1), (1, -1)])
    assert frames.shape == (5, 2, 1)
    assert np.allclose(frames[:, :, 0], start)


def test_holonomy_is_minus_plaquette_flux(skyrmion):
    frames = skyrmion.all_frames()[..., 0]
    psi = frames[3, 5], frames[3, 6], frames[4, 6], frames[4, 5]
    loop = np.vdot(psi[0], psi[1]) * np.vdot(psi[1], psi[2]) * np.vdot(psi[2], psi[3]) * np.vdot(psi[3], psi[0])
    assert loop_holonomy(skyrmion, (3, 5), (0, 1)) == pytest.approx(-np.angle(loop), abs=1e-10)


def test_trs_gauge_residuals(cos2d_section):
    assert cos2d_section.rank == 1
    assert cos2d_section.range_residual() <= 1e-10
    assert cos2d_section.orthonormality_residual() <= 1e-10
    assert cos2d_section.periodicity_residual < 1e-2
    assert cos2d_section.trs_residual < 1e-2


def test_trs_gauge_gets_smoother_on_finer_grids(fine_sections):
    assert gauge_smoothness(fine_sections[64]) < 0.6 * gauge_smoothness(fine_sections[32])


def test_trs_gauge_on_gauge_transformed_model():
    section = _cos2d_gauge((32, 32), fixtures.gauge_cos2d(5.0, 0.2), cutoff=5)
    assert section.range_residual() <= 1e-6
    assert section.orthonormality_residual() <= 1e-6
    assert section.periodicity_residual <= 1e-6
    assert section.trs_residual <= 1e-6


def test_flat_mismatch_phase_passes():
    check_mismatch_phase(np.full((8, 6), np.pi), "flat", 2)


def test_winding_mismatch_phase_is_obstructed():
    theta = 2 * np.pi * np.arange(8) / 8
    with pytest.raises(WindingObstructionError) as info:
        check_mismatch_phase(theta, "winding", 1)
    assert info.value.details == {"axis": 2, "loop_axis": 1}


def test_jumpy_mismatch_phase_needs_finer_grid():
    theta = np.tile([0.0, 2.9], 4)
    with pytest.raises(GridTooCoarseError, match="refine the grid"):
        check_mismatch_phase(theta, "jumpy", 1)


def test_trs_gauge_needs_centered_grid(cos2d_field, cos2d):
    with pytest.raises(ConfigError):
        rank1_trs_gauge(cos2d_field, time_reversal(cos2d, PlaneWaveBasis(2, 3)))


def test_trs_gauge_needs_single_band():
    field = fixtures.dirac_field(KGrid((4, 4, 4, 4), centered=True))
    with pytest.raises(ConfigError):
        rank1_trs_gauge(field, plain_conjugation(4, 4))


def test_skyrmion_is_obstructed():
    field = fixtures.skyrmion_field(KGrid((8, 8), centered=True))
    with pytest.raises(ObstructionError) as info:
        rank1_trs_gauge(field, plain_conjugation(2, 2))
    assert info.value.stage == "wannier"
    assert info.value.details["trs_residual"] > 1e-4


def test_projection_gauge_on_two_bands():
    model = fixtures.cos1d()
    basis = PlaneWaveBasis(1, 4)
    field = build_projector_field(model, basis, KGrid((8,)), RelevantSet.lowest(2))
    trials = gaussian_trials(basis, model.lattice, [[0.4], [0.6]], [0.1, 0.1])
    section = multiband_projection_gauge(field, trials)
    assert section.rank == 2
    assert section.min_singular > 1e-6
    assert section.orthonormality_residual() <= 1e-10
    assert section.range_residual() <= 1e-10


def test_trials_need_widths():
    with pytest.raises(ConfigError):
        gaussian_trials(PlaneWaveBasis(1, 2), fixtures.cos1d().lattice, [[0.4], [0.6]], [0.1])


def test_trial_count_must_match_rank(skyrmion):
    with pytest.raises(ConfigError):
        multiband_projection_gauge(skyrmion, np.eye(2))


def test_dependent_trial_is_reported(skyrmion):
    with pytest.raises(TrialFailureError) as info:
        multiband_projection_gauge(skyrmion, np.array([[1.0], [0.0]]))
    assert info.value.details["sigma_min"] < 1e-6
    assert info.value.details["kappa"] in ([0.0, 0.5], [0.5, 0.0], [0.5, 0.5])


def test_constant_section_is_single_cell():
    field = fixtures.constant_field(KGrid((4, 4)))
    section = multiband_projection_gauge(field, np.array([[1.0], [0.0]]))
    (w,) = inverse_bf(section)
    assert w.mass_at((0, 0)) == pytest.approx(1.0)
    assert w.mass_at((1, 0)) == pytest.approx(0.0, abs=1e-14)
    assert w.norm() == pytest.approx(1.0)


def test_constant_plane_wave_section_is_a_dirichlet_kernel():
    basis = PlaneWaveBasis(1, 1)
    grid = KGrid((6,))
    P = np.zeros((3, 3), dtype=complex)
    P[basis.position((0,)), basis.position((0,))] = 1.0
    field = ProjectorField(
        grid=grid,
        matrices=np.broadcast_to(P, (6, 3, 3)).copy(),
        rank=1,
        embeddings=(basis.shift_matrix(0, +1).astype(complex),),
        cutoff=1,
    )
    section = multiband_projection_gauge(field, P[:, basis.position((0,))][:, None])
    (w,) = inverse_bf(section)
    assert w.norm() == pytest.approx(1.0)
    assert w.mass_at((0,)) == pytest.approx(float(np.max(w.masses)))
    assert w.mass_at((1,)) > w.mass_at((2,)) > 0


def test_exponential_masses_fit():
    distances = np.arange(10.0)
    fit = fit_shell_decay(distances, np.exp(-0.7 * distances), half_width=10.0)
    assert fit.rate == pytest.approx(0.7)
    assert fit.r_squared == pytest.approx(1.0)
    assert not fit.capped
    assert fit.shells == 9
    assert fit.r_min == 1.0


def test_too_few_shells_cap_the_rate():
    distances = np.arange(6.0)
    masses = np.zeros(6)
    masses[0] = 1.0
    fit = fit_shell_decay(distances, masses, half_width=6.0)
    assert fit.capped
    assert fit.rate == pytest.approx(np.log(1.0 / MASS_FLOOR))


def test_window_limits_the_fit():
    distances = np.arange(20.0)
    fit = fit_shell_decay(distances, 3.0 * np.exp(-0.5 * distances), half_width=20.0, window=(3, 8))
    assert fit.rate == pytest.approx(0.5)
    assert (fit.r_min, fit.r_max, fit.shells) == (3.0, 8.0, 6)


def test_shells_are_unit_bins():
    distances = np.array([0.0, 1.0, 1.5, np.sqrt(2.0), 2.0, 2.9, 3.0, 4.2])
    masses = np.array([1.0, 0.5, 0.9, 0.1, 0.2, 0.3, 0.05, 0.01])
    fit = fit_shell_decay(distances, masses, half_width=10.0)
    assert fit.shells == 4
    assert fit.r_squared < 1.0


def test_empty_window_is_refused():
    with pytest.raises(ConfigError):
        fit_shell_decay(np.arange(5.0), np.ones(5), half_width=5.0, window=(4, 2))


def test_wannier_function_is_centered_and_decays(fine_sections):
    rates = []
    for n in (32, 64):
        (w,) = inverse_bf(fine_sections[n])
        assert w.norm() == pytest.approx(1.0, abs=1e-6)
        assert w.mass_at((0, 0)) == pytest.approx(float(np.max(w.masses)))
        fit = decay_fit(w, window=(3, 12))
        assert fit.rate > 0
        assert fit.r_squared >= 0.99
        assert fit.shells >= 5
        rates.append(fit.rate)
    assert abs(rates[1] - rates[0]) < 0.05 * rates[0]


def test_translates_are_orthonormal(cos2d_section):
    (w,) = inverse_bf(cos2d_section)
    overlaps = translate_overlaps(w)
    expected = np.zeros(w.counts)
    expected[0, 0] = 1.0
    assert np.allclose(overlaps, expected, atol=1e-8)
