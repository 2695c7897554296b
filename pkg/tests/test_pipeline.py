import pytest

from bloch_wannier import fixtures
from bloch_wannier.config import RunConfig
from bloch_wannier.errors import ConfigError, FluxError, GapError
from bloch_wannier.io import read_projector_field, read_table
from bloch_wannier.pipeline import PipelineRunner, run_pipeline
from bloch_wannier.report import read_report


def _run(tmp_path, model, pipeline, **values):
    config = RunConfig(model=model, pipeline=pipeline, out=tmp_path / "out", **values)
    return run_pipeline(config, output_callback=lambda message: None)


def test_validate_magnetic_model(tmp_path, magnetic_model, model_file):
    report = _run(tmp_path, model_file(magnetic_model), "validate")
    assert report.passed
    assert report.model == "magnetic_cos2d"
    assert report.sections["flux"] == [{"plane": [1, 2], "flux": 0.0}]
    names = [c.name for c in report.checks]
    assert names == ["zero_flux", "lattice_biorthogonality", "vector_potential_reality", "field_closedness"]
    assert read_report(tmp_path / "out" / "report.json").passed


def test_validate_synthetic_field(tmp_path, synthetic_file):
    report = _run(tmp_path, synthetic_file("skyrmion", 2, mass=1.0), "validate", grid=[8, 8])
    assert report.passed
    assert {c.name for c in report.checks} == {"projector_idempotency", "projector_hermiticity", "projector_trace"}


def test_chern_of_skyrmion(tmp_path, synthetic_file):
    report = _run(tmp_path, synthetic_file("skyrmion", 2, mass=1.0), "chern", grid=[16, 16])
    chern = report.sections["chern"]
    assert abs(chern["c1"][0]["value"]) == 1
    assert chern["verdict"] == "non-trivial"
    assert {"chern.csv", "projector.bin"} <= set(report.artifacts)
    field = read_projector_field(tmp_path / "out" / "projector.bin")
    assert field.grid.counts == (16, 16)
    assert field.rank == 1
    assert "chern.verdict: non-trivial" in (tmp_path / "out" / "report.txt").read_text()


def test_bands_along_path(tmp_path, cos2d, model_file):
    path = {"vertices": [[0.0, 0.0], [0.5, 0.0], [0.5, 0.5]], "points_per_segment": 4, "count": 3}
    report = _run(tmp_path, model_file(cos2d), "bands", cutoff=2, grid=[4, 4], path=path)
    assert {"bands_path.csv", "bands_path.svg", "bands_grid.csv"} <= set(report.artifacts)
    columns, data = read_table(tmp_path / "out" / "bands_path.csv")
    assert columns == ["k1", "k2", "E1", "E2", "E3"]
    assert data.shape == (9, 5)
    assert report.sections["gap"]["passed"]


def test_symmetry_of_cos2d(tmp_path, cos2d, model_file):
    report = _run(tmp_path, model_file(cos2d), "symmetry", cutoff=2, grid=[6, 6])
    checks = {c.name: c for c in report.checks}
    assert checks["time_reversal_projector"].passed
    assert checks["parity_projector"].passed
    assert checks["spectrum"].passed
    assert "gauge_covariance" in checks
    assert "symmetry.csv" in report.artifacts


def test_wannier_of_cos2d(tmp_path, cos2d, model_file):
    report = _run(tmp_path, model_file(cos2d), "wannier", cutoff=3, grid=[8, 8])
    checks = {c.name: c for c in report.checks}
    assert checks["wannier_1_norm"].passed
    assert report.sections["gauge"]["kind"] == "trs"
    assert {"wannier_1.bin", "masses_1.csv", "masses_1.svg"} <= set(report.artifacts)
    assert report.sections["decay"][0]["rate"] > 0
    for name in ("wannier_1.bin", "masses_1.csv", "masses_1.svg"):
        assert (tmp_path / "out" / name).exists()


def test_projection_gauge_needs_trials(tmp_path, model_file):
    with pytest.raises(ConfigError, match="trials"):
        _run(tmp_path, model_file(fixtures.cos1d()), "wannier", grid=[8], bands=2, gauge="projection")


def test_tpuv_of_cos1d(tmp_path, model_file):
    report = _run(tmp_path, model_file(fixtures.cos1d()), "tpuv", grid=[8], supercells=[8, 32])
    section = report.sections["tpuv"]
    assert section["bloch"] == pytest.approx(1.0)
    assert [row["size"] for row in section["supercell"]] == [8, 32]
    assert section["supercell"][-1]["value"] == pytest.approx(1.0, rel=2e-2)
    assert "tpuv.csv" in report.artifacts


def test_tpuv_skips_oversize_supercells(tmp_path, cos2d, model_file, caplog):
    report = _run(tmp_path, model_file(cos2d), "tpuv", cutoff=2, grid=[4, 4], supercells=[2, 8])
    assert [row["size"] for row in report.sections["tpuv"]["supercell"]] == [2]
    assert "exceed" in caplog.text


def test_flux_violation_stops_the_run(tmp_path, mocker, magnetic_model, model_file):
    mocker.patch("bloch_wannier.pipeline.zero_flux_check", return_value={(0, 1): 0.5})
    with pytest.raises(FluxError) as info:
        _run(tmp_path, model_file(magnetic_model), "chern", grid=[6, 6])
    assert info.value.stage == "flux"
    error = read_report(tmp_path / "out" / "report.json").error
    assert error.name == "FluxError"
    assert error.exit_code == 3
    assert "bands_grid.csv" not in read_report(tmp_path / "out" / "report.json").artifacts


def test_gap_failure_is_reported(tmp_path, model_file):
    with pytest.raises(GapError) as info:
        _run(tmp_path, model_file(fixtures.free(2)), "chern", grid=[8, 8])
    assert info.value.stage == "field"
    error = read_report(tmp_path / "out" / "report.json").error
    assert error.name == "GapError"
    assert error.exit_code == 3


def test_synthetic_field_has_no_bands(tmp_path, synthetic_file):
    with pytest.raises(ConfigError) as info:
        _run(tmp_path, synthetic_file("skyrmion", 2), "bands")
    assert info.value.stage == "bands"


def test_missing_model_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        _run(tmp_path, tmp_path / "missing.json", "validate")
    assert info.value.stage == "load"


def test_progress_goes_to_callback(tmp_path, mocker, magnetic_model, model_file):
    callback = mocker.Mock()
    config = RunConfig(model=model_file(magnetic_model), out=tmp_path / "out")
    PipelineRunner(config, output_callback=callback).run()
    callback.assert_any_call("[load] running")
    callback.assert_any_call("[flux] done")
    callback.assert_called_with("pipeline validate passed")
