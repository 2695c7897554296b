import numpy as np
import pytest

from bloch_wannier import fixtures
from bloch_wannier.bloch import PlaneWaveBasis
from bloch_wannier.chern import (
    MAX_SUPERCELL_POINTS,
    Calibration,
    all_planes,
    box_hamiltonian,
    calibrate_chern2,
    chern1_curvature,
    chern1_plaquette,
    chern2_curvature,
    chern2_plaquette,
    chern_report,
    load_calibration,
    random_periodic_multiplier,
    save_calibration,
    supercell_points,
    tpuv_bloch,
    tpuv_supercell,
    trace_property_residual,
    triviality_verdict,
)
from bloch_wannier.errors import ConfigError, DimensionError, IncompleteInputError
from bloch_wannier.model import FourierScalar, FourierVector, Lattice, LatticeModel
from bloch_wannier.projector import KGrid, RelevantSet, build_projector_field


def test_skyrmion_first_chern_matches_degree(skyrmion):
    value = chern1_plaquette(skyrmion, (0, 1)).value
    assert abs(value) == 1
    assert abs(value) == abs(fixtures.skyrmion_degree(1.0))


def test_orientation_flip(skyrmion):
    assert chern1_plaquette(skyrmion, (1, 0)).value == -chern1_plaquette(skyrmion, (0, 1)).value


def test_trivial_skyrmion_mass():
    field = fixtures.skyrmion_field(KGrid((16, 16)), 3.0)
    assert chern1_plaquette(field, (0, 1)).value == 0


def test_cos2d_has_zero_chern(cos2d_field):
    result = chern1_plaquette(cos2d_field, (0, 1))
    assert result.value == 0
    assert abs(result.flux_sum) < 1e-6


def test_magnetic_model_has_zero_chern(magnetic_model):
    field = build_projector_field(magnetic_model, PlaneWaveBasis(2, 3), KGrid((6, 6)), RelevantSet.lowest(1))
    assert chern1_plaquette(field, (0, 1)).value == 0


def test_curvature_agrees_with_plaquette(skyrmion):
    lattice_value = chern1_plaquette(skyrmion, (0, 1)).value
    curved = chern1_curvature(skyrmion, (0, 1))
    assert curved.value == pytest.approx(lattice_value, abs=0.05)
    assert curved.slices.shape == (1,)


def test_plaquette_needs_six_points():
    field = fixtures.skyrmion_field(KGrid((4, 8)))
    with pytest.raises(ConfigError):
        chern1_plaquette(field, (0, 1))


def test_invalid_plane(skyrmion):
    with pytest.raises(ConfigError):
        chern1_plaquette(skyrmion, (1, 1))


def test_all_planes():
    assert all_planes(4) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert all_planes(1) == []


def test_second_chern_needs_four_dimensions(skyrmion):
    with pytest.raises(DimensionError):
        chern2_plaquette(skyrmion)


def test_second_chern_of_trivial_dirac_field():
    result = chern2_plaquette(fixtures.dirac_field(KGrid((6,) * 4), 5.0))
    assert result.value == 0
    assert result.residual < 0.25


@pytest.mark.parametrize("mass", [3.0, -3.0, 5.0])
def test_second_chern_matches_degree(mass):
    result = chern2_plaquette(fixtures.dirac_field(KGrid((10,) * 4), mass))
    assert result.value == fixtures.dirac_degree(mass)
    assert result.residual == pytest.approx(abs(result.raw - result.value))


def test_calibration_reproduces_reference():
    calibration = calibrate_chern2(grid=8, mass=3.0)
    assert calibration.s in (1, -1)
    assert calibration.nu > 0
    field = fixtures.dirac_field(KGrid((8,) * 4), 3.0)
    reference = chern2_plaquette(field).value
    assert chern2_curvature(field, calibration).value == pytest.approx(reference, abs=1e-9)


def test_calibration_round_trip(tmp_path):
    path = tmp_path / "calibration.json"
    save_calibration(Calibration(s=-1, nu=0.9, grid=8), path)
    loaded = load_calibration(path)
    assert loaded.s == -1
    assert loaded.nu == pytest.approx(0.9)


def test_packaged_calibration():
    packaged = load_calibration()
    fresh = calibrate_chern2(12, 3.0)
    assert (packaged.s, packaged.grid, packaged.mass) == (fresh.s, fresh.grid, fresh.mass)
    # stored to seven digits
    assert packaged.nu == pytest.approx(fresh.nu, rel=1e-6)


@pytest.mark.parametrize("grid", [10, 12])
def test_calibrated_curvature_matches_plaquette(grid):
    field = fixtures.dirac_field(KGrid((grid,) * 4), 3.0)
    reference = chern2_plaquette(field).value
    assert chern2_curvature(field, load_calibration()).value == pytest.approx(reference, abs=0.1)


def test_weak_four_dimensional_model_is_trivial():
    field = build_projector_field(fixtures.weak4d(), PlaneWaveBasis(4, 1), KGrid((6,) * 4), RelevantSet.lowest(1))
    assert chern2_plaquette(field).value == 0
    assert abs(chern2_curvature(field, load_calibration()).value) < 0.1


def test_broken_calibration_file(tmp_path):
    path = tmp_path / "calibration.json"
    path.write_text('{"s": "up"}')
    with pytest.raises(ConfigError):
        load_calibration(path)
    with pytest.raises(ConfigError):
        load_calibration(tmp_path / "missing.json")


@pytest.mark.parametrize(
    "dimension, rank, c1, c2, higher, verdict, sigma",
    [
        (2, 1, {(0, 1): 0}, None, None, "trivial", 0),
        (2, 1, {(0, 1): 1}, None, None, "non-trivial", 0),
        (3, 2, {(0, 1): 0, (0, 2): 0, (1, 2): 0}, None, None, "trivial", 1),
        (4, 2, {}, 1, None, "non-trivial", 0),
        (4, 2, {}, 0, None, "trivial", 0),
        (6, 1, {}, None, None, "trivial", 0),
        (5, 2, {}, 0, [0], "indeterminate-unstable-rank", 0),
        (5, 3, {}, 0, [], "trivial", 1),
        (5, 3, {}, 0, [2], "non-trivial", 1),
        (5, 3, {}, 1, [0], "non-trivial", 1),
    ],
)
def test_triviality_verdict(dimension, rank, c1, c2, higher, verdict, sigma):
    report = triviality_verdict(dimension, rank, c1, c2, higher)
    assert report.verdict == verdict
    assert report.sigma == sigma


def test_frame_bound():
    report = triviality_verdict(5, 3, c2=0, higher=[])
    assert report.generators == 1
    assert report.frame_bound == 2**5 * 2 + 1


def test_verdict_needs_second_chern():
    with pytest.raises(IncompleteInputError):
        triviality_verdict(4, 2, {(0, 1): 0})
    with pytest.raises(IncompleteInputError):
        triviality_verdict(5, 2)
    with pytest.raises(IncompleteInputError):
        triviality_verdict(5, 3, higher=[0])


def test_verdict_rejects_empty_rank():
    with pytest.raises(ConfigError):
        triviality_verdict(2, 0)


def test_chern_report_on_skyrmion(skyrmion):
    report = chern_report(skyrmion)
    assert len(report.c1) == 1
    assert report.c1[0].plane == [1, 2]
    assert report.c2 is None
    assert report.verdict == "non-trivial"


def test_chern_report_on_cos2d(cos2d_field):
    report = chern_report(cos2d_field, curvature=False)
    assert report.c1[0].value == 0
    assert report.c1[0].curvature_value is None
    assert report.verdict == "trivial"


def test_tpuv_of_projector_traces():
    assert tpuv_bloch(np.ones((4, 4)), 2.0) == pytest.approx(0.5)
    assert tpuv_bloch(np.zeros(8), 1.0) == 0.0
    with pytest.raises(ConfigError):
        tpuv_bloch(np.array([]), 1.0)


def test_tpuv_of_field_traces(cos2d_field):
    traces = np.einsum("...aa->...", cos2d_field.matrices)
    assert tpuv_bloch(traces, 1.0) == pytest.approx(1.0)


def test_supercell_trace_converges():
    model = fixtures.cos1d()
    estimates = tpuv_supercell(model, PlaneWaveBasis(1, 3), RelevantSet.lowest(1), [2, 8, 64])
    errors = [abs(value - 1.0) for value in estimates]
    assert errors[-1] <= 2e-2
    assert errors[-1] <= errors[0]


def test_supercell_of_zero_weight():
    model = fixtures.cos1d()
    estimates = tpuv_supercell(
        model, PlaneWaveBasis(1, 2), RelevantSet.lowest(1), [2, 4], spectral_weight=lambda energies: np.zeros_like(energies)
    )
    assert estimates == [0.0, 0.0]


def test_supercell_sizes_must_increase():
    with pytest.raises(ConfigError):
        tpuv_supercell(fixtures.cos1d(), PlaneWaveBasis(1, 2), RelevantSet.lowest(1), [4, 2])


def test_supercell_limited_to_two_dimensions():
    with pytest.raises(DimensionError):
        tpuv_supercell(fixtures.weak4d(), PlaneWaveBasis(4, 1), RelevantSet.lowest(1), [2])


def test_supercell_needs_contiguous_bands():
    with pytest.raises(ConfigError, match="contiguous"):
        tpuv_supercell(fixtures.cos1d(), PlaneWaveBasis(1, 2), RelevantSet((0, 2)), [2])


def test_box_hamiltonian_is_hermitian(magnetic_model):
    H, coords = box_hamiltonian(magnetic_model, 2, 6)
    assert H.shape == (11**2, 11**2)
    assert coords.min() == 1 and coords.max() == 11
    assert abs(H - H.conj().T).max() <= 1e-12


def test_box_spectrum_is_gauge_invariant(cos2d, gauge_model):
    plain, _ = box_hamiltonian(cos2d, 2, 6)
    gauged, _ = box_hamiltonian(gauge_model, 2, 6)
    assert abs(gauged - plain).max() > 1e-3
    before = np.linalg.eigvalsh(plain.toarray())
    after = np.linalg.eigvalsh(gauged.toarray())
    assert np.allclose(before, after, atol=1e-8)


def test_box_refuses_oblique_lattice():
    model = LatticeModel(Lattice.from_basis([[1.0, 0.0], [0.5, 1.0]]), FourierScalar.zero(2), FourierVector.zero(2), "oblique")
    with pytest.raises(ConfigError, match="orthogonal"):
        box_hamiltonian(model, 2, 6)


def test_box_point_limit():
    assert supercell_points(8, 2, 14) > MAX_SUPERCELL_POINTS
    with pytest.raises(ConfigError, match="points"):
        box_hamiltonian(fixtures.cos2d(), 8, 14)


def test_trace_of_commutator_vanishes(cos2d_field):
    X = random_periodic_multiplier(PlaneWaveBasis(2, 3))
    assert X.shape == (cos2d_field.size, cos2d_field.size)
    assert np.allclose(X, X.conj().T)
    assert trace_property_residual(cos2d_field, X, 1.0) <= 1e-10
