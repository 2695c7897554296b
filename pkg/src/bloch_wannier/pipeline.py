"""Pipeline orchestration: load the model, run the stages, write artifacts and the report."""

import logging
from collections.abc import Callable
from pathlib import Path
from typing import Any, Dict, List, Optional, TypeVar

import numpy as np
import typer

from .bloch import PlaneWaveBasis, band_path, gauge_covariance_check, path_points, spectrum_symmetry_residual
from .chern import (
    MAX_SUPERCELL_POINTS,
    chern_report,
    load_calibration,
    random_periodic_multiplier,
    supercell_points,
    trace_property_residual,
    tpuv_bloch,
    tpuv_supercell,
)
from .config import ModelDocument, RunConfig, build_model, load_model_document
from .errors import BlochWannierError, ConfigError, FluxError, ParityInapplicableError
from .fixtures import SYNTHETIC, gauge_chi
from .io import (
    ensure_directory,
    write_bands,
    write_masses,
    write_projector_field,
    write_records,
    write_table,
    write_wannier,
)
from .model import LatticeModel, closedness_residual, zero_flux_check
from .plotting import plot_band_path, plot_masses
from .projector import KGrid, ProjectorField, build_projector_field
from .report import ErrorEntry, RunReport, write_report
from .symmetry import (
    AntiunitaryFiberOp,
    SymmetryCheck,
    parity,
    parity_projector_residual,
    plain_conjugation,
    time_reversal,
    trs_projector_residual,
)
from .wannier import (
    TRIAL_TOL,
    SectionField,
    decay_fit,
    gauge_smoothness,
    gaussian_trials,
    inverse_bf,
    multiband_projection_gauge,
    rank1_trs_gauge,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

LATTICE_TOL = 1e-12
NORM_TOL = 1e-6
TRACE_TOL = 1e-10
GAUGE_CHECK_AMPLITUDE = 0.1


class PipelineRunner:
    """Run one configured pipeline stage by stage, forwarding progress to output_callback"""

    def __init__(self, config: RunConfig, output_callback: Optional[Callable[[str], None]] = None) -> None:
        self.config = config
        self.output_callback = output_callback or typer.echo
        self.report = RunReport(pipeline=config.pipeline)
        self.out: Path = Path(config.out)
        self.document: Optional[ModelDocument] = None
        self.model: Optional[LatticeModel] = None

    def _log_output(self, message: str) -> None:
        self.output_callback(message)

    def stage(self, name: str, func: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        """Call func; module errors leave here carrying the stage name"""
        self._log_output(f"[{name}] running")
        try:
            result = func(*args, **kwargs)
        except BlochWannierError as e:
            if e.stage is None:
                e.stage = name
            self._log_output(f"[{name}] failed: {e.name}")
            raise
        self._log_output(f"[{name}] done")
        return result

    def artifact(self, path: Path) -> Path:
        self.report.artifacts.append(Path(path).name)
        return path

    def run(self) -> RunReport:
        self.out = ensure_directory(self.config.out)
        try:
            self.document = self.stage("load", load_model_document, self.config.model)
            self.report.model = self.document.name
            if not self.document.is_synthetic:
                self.model = self.stage("model", build_model, self.document, self.config.tolerances.flux)
                self.stage("flux", self._flux_checks)
            handler = getattr(self, f"_run_{self.config.pipeline}")
            handler()
        except BlochWannierError as e:
            if e.stage is None:
                e.stage = self.config.pipeline
            self.report.error = ErrorEntry.from_error(e)
            raise
        finally:
            write_report(self.report, self.out)
        status = "passed" if self.report.passed else "finished with failed checks"
        self._log_output(f"pipeline {self.config.pipeline} {status}")
        return self.report

    # shared pieces

    @property
    def dimension(self) -> int:
        return self.document.dimension

    @property
    def basis(self) -> PlaneWaveBasis:
        return PlaneWaveBasis(self.dimension, self.config.cutoff)

    def _require_model(self) -> LatticeModel:
        if self.model is None:
            raise ConfigError(f"pipeline {self.config.pipeline} needs a Hamiltonian; {self.document.name} is synthetic")
        return self.model

    def _grid(self, centered: bool = False) -> KGrid:
        return KGrid(self.config.grid_counts(self.dimension), centered=centered)

    def _field(self, centered: bool = False) -> ProjectorField:
        grid = self._grid(centered)
        if self.document.is_synthetic:
            spec = self.document.synthetic
            parameters = {} if spec.mass is None else {"mass": spec.mass}
            return self.stage("field", SYNTHETIC[spec.name], grid, **parameters)
        field = self.stage(
            "field",
            build_projector_field,
            self.model,
            self.basis,
            grid,
            self.config.relevant(),
            self.config.tolerances.gap,
            self.config.threads,
        )
        self._record_gap(field)
        return field

    def _record_gap(self, field: ProjectorField) -> None:
        gap = field.gap
        self.report.sections["gap"] = gap.model_dump()
        self.report.check("gap", gap.value, gap.tolerance, below=False)
        rows = np.hstack([field.grid.points().reshape(-1, field.dimension), field.energies.reshape(-1, field.size)])
        self.artifact(write_bands(self.out / "bands_grid.csv", rows, field.dimension))

    def _volume(self) -> float:
        return 1.0 if self.model is None else self.model.lattice.volume

    def _flux_checks(self) -> None:
        model = self.model
        lattice = model.lattice
        field = model.magnetic_field()
        fluxes = zero_flux_check(field, lattice)
        self.report.sections["flux"] = [
            {"plane": [a + 1, b + 1], "flux": flux} for (a, b), flux in sorted(fluxes.items())
        ]
        worst = max((abs(v) for v in fluxes.values()), default=0.0)
        tolerance = self.config.tolerances.flux
        self.report.check("zero_flux", worst, tolerance)
        if worst > tolerance:
            raise FluxError(
                f"magnetic flux through a unit face is {worst:.3e} (tolerance {tolerance:.1e})",
                details={"flux": worst},
            )

    # pipelines

    def _run_validate(self) -> None:
        if self.model is None:
            field = self._field()
            for name, value in zip(("idempotency", "hermiticity", "trace"), field.invariant_residuals()):
                self.report.check(f"projector_{name}", value, TRACE_TOL)
            return
        lattice = self.model.lattice
        self.report.check("lattice_biorthogonality", lattice.biorthogonality_residual(), LATTICE_TOL)
        self.report.check("vector_potential_reality", self.model.vector_potential.reality_residual(), LATTICE_TOL)
        residual = closedness_residual(self.model.magnetic_field(), lattice)
        self.report.check("field_closedness", residual, self.config.tolerances.flux)

    def _run_bands(self) -> None:
        model = self._require_model()
        basis = self.basis
        path = self.config.path
        if path is not None and path.vertices:
            count = min(basis.size, path.count)
            points = path_points(path.vertices, path.points_per_segment)
            table = self.stage("path", band_path, model, basis, points, count, self.config.threads)
            self.artifact(write_bands(self.out / "bands_path.csv", table, self.dimension))
            if self.config.plots:
                self.artifact(plot_band_path(table, self.dimension, self.out / "bands_path.svg"))
        self._field()

    def _symmetry_rows(self, field: ProjectorField, op: AntiunitaryFiberOp, check: str) -> List[SymmetryCheck]:
        tolerance = self.config.tolerances.trs
        residual = (
            parity_projector_residual(field, op) if check == "parity" else trs_projector_residual(field, op)
        )
        involution = op.involution_residual()
        return [
            SymmetryCheck(check=f"{check}_projector", residual=residual, tolerance=tolerance, passed=residual <= tolerance, cutoff=field.cutoff),
            SymmetryCheck(check=f"{check}_involution", residual=involution, tolerance=tolerance, passed=involution <= tolerance, cutoff=field.cutoff),
        ]

    def _run_symmetry(self) -> None:
        field = self._field()
        rows: List[SymmetryCheck] = []
        if self.model is None:
            rows += self._symmetry_rows(field, plain_conjugation(field.size, field.dimension), "time_reversal")
        else:
            model = self.model
            basis = self.basis
            J = self.stage("time_reversal", time_reversal, model, basis, self.config.resolution)
            rows += self._symmetry_rows(field, J, "time_reversal")
            try:
                Pi = self.stage("parity", parity, model, basis, self.config.resolution)
                rows += self._symmetry_rows(field, Pi, "parity")
            except ParityInapplicableError as e:
                logger.info("%s", e.message)
            m = self.config.relevant().m
            count = max(self.config.relevant().bands) + 1
            spectrum = self.stage(
                "spectrum",
                spectrum_symmetry_residual,
                model,
                basis,
                field.grid.points().reshape(-1, field.dimension),
                count,
                self.config.threads,
            )
            tolerance = self.config.tolerances.symmetry_refuse
            rows.append(SymmetryCheck(check="spectrum", residual=spectrum, tolerance=tolerance, passed=spectrum <= tolerance, cutoff=basis.cutoff))
            kappa = field.grid.kappa(field.grid.origin) + 0.25 / np.asarray(field.grid.counts)
            changes = self.stage(
                "gauge_covariance",
                gauge_covariance_check,
                model,
                gauge_chi(self.dimension, GAUGE_CHECK_AMPLITUDE),
                [basis.cutoff],
                kappa,
                max(m, count),
            )
            for cutoff, change in changes.items():
                rows.append(SymmetryCheck(check="gauge_covariance", residual=change, tolerance=tolerance, passed=change <= tolerance, cutoff=cutoff))
        for row in rows:
            self.report.check(row.check, row.residual, row.tolerance)
        self.report.sections["symmetry"] = [row.model_dump() for row in rows]
        columns = ["check", "residual", "tolerance", "passed", "cutoff"]
        records = [[r.check, r.residual, r.tolerance, int(r.passed), r.cutoff] for r in rows]
        self.artifact(write_records(self.out / "symmetry.csv", columns, records))

    def _run_chern(self) -> None:
        field = self._field()
        calibration = load_calibration(self.config.calibration)
        result = self.stage("chern", chern_report, field, self._volume(), calibration)
        for entry in result.c1:
            plane = "".join(str(p) for p in entry.plane)
            self.report.check(f"c1_{plane}_integrality", entry.residual, self.config.tolerances.integer)
        if result.c2 is not None:
            self.report.check("c2_integrality", result.c2.residual, self.config.tolerances.integer)
        self.report.sections["chern"] = result.model_dump()
        records = [[f"{e.plane[0]},{e.plane[1]}", e.value, e.residual, e.curvature_value] for e in result.c1]
        if result.c2 is not None:
            records.append(["c2", result.c2.value, result.c2.residual, result.c2.curvature_value])
        self.artifact(write_records(self.out / "chern.csv", ["plane", "value", "residual", "curvature"], records))
        self.artifact(write_projector_field(self.out / "projector.bin", field))

    def _gauge(self, field: ProjectorField) -> SectionField:
        kind = self.config.gauge
        if kind == "auto":
            kind = "trs" if field.rank == 1 else "projection"
        if kind == "trs":
            if self.model is None:
                J = plain_conjugation(field.size, field.dimension)
            else:
                J = self.stage("time_reversal", time_reversal, self.model, self.basis, self.config.resolution)
            section = self.stage("gauge", rank1_trs_gauge, field, J, self.config.tolerances.symmetry_refuse)
        else:
            section = self.stage("gauge", multiband_projection_gauge, field, self._trials(field))
            self.report.check("trial_min_singular", section.min_singular, TRIAL_TOL, below=False)
        self.report.sections["gauge"] = {
            "kind": kind,
            "periodicity": section.periodicity_residual,
            "time_reversal": section.trs_residual,
            "min_singular": section.min_singular,
            "smoothness": gauge_smoothness(section),
        }
        refuse = self.config.tolerances.symmetry_refuse
        self.report.check("section_periodicity", section.periodicity_residual, refuse)
        if section.trs_residual is not None:
            self.report.check("section_time_reversal", section.trs_residual, refuse)
        self.report.check("section_range", section.range_residual(), refuse)
        self.report.check("section_orthonormality", section.orthonormality_residual(), refuse)
        return section

    def _trials(self, field: ProjectorField):
        if self.model is None:
            return np.eye(field.size, dtype=complex)[:, : field.rank]
        trials = self.config.trials
        if len(trials) != field.rank:
            raise ConfigError(f"projection gauge needs {field.rank} trials, got {len(trials)}")
        return gaussian_trials(
            self.basis,
            self.model.lattice,
            [t.center for t in trials],
            [t.width for t in trials],
        )

    def _run_wannier(self) -> None:
        field = self._field(centered=True)
        section = self._gauge(field)
        lattice = None if self.model is None else self.model.lattice
        functions = self.stage("inverse_bf", inverse_bf, section, lattice, self.config.resolution)
        fits: List[Dict[str, Any]] = []
        for w in functions:
            label = w.band + 1
            self.report.check(f"wannier_{label}_norm", abs(w.norm() - 1.0), NORM_TOL)
            fit = self.stage("decay", decay_fit, w, self.config.decay_window)
            fits.append({"band": label, **fit.model_dump()})
            self.artifact(write_wannier(self.out / f"wannier_{label}.bin", w))
            self.artifact(write_masses(self.out / f"masses_{label}.csv", w))
            if self.config.plots:
                self.artifact(plot_masses(w, fit, self.out / f"masses_{label}.svg"))
        self.report.sections["decay"] = fits

    def _run_tpuv(self) -> None:
        field = self._field()
        volume = self._volume()
        traces = np.einsum("...aa->...", field.matrices)
        bloch_value = self.stage("tpuv_bloch", tpuv_bloch, traces, volume)
        section: Dict[str, Any] = {"bloch": bloch_value}
        if self.model is not None:
            basis = self.basis
            multiplier = random_periodic_multiplier(basis)
            self.report.check("trace_commutator", trace_property_residual(field, multiplier, volume), TRACE_TOL)
            if self.dimension <= 2:
                resolution = 4 * basis.cutoff + 2
                sizes = [
                    L for L in self.config.supercells
                    if supercell_points(L, self.dimension, resolution) <= MAX_SUPERCELL_POINTS
                ]
                dropped = sorted(set(self.config.supercells) - set(sizes))
                if dropped:
                    logger.warning("supercells %s exceed %d sample points; skipped", dropped, MAX_SUPERCELL_POINTS)
                if not sizes:
                    logger.warning("no supercell fits the point limit; supercell traces skipped")
                    self.report.sections["tpuv"] = section
                    return
                estimates = self.stage(
                    "tpuv_supercell",
                    tpuv_supercell,
                    self.model,
                    basis,
                    self.config.relevant(),
                    sizes,
                    None,
                    self.config.threads,
                )
                section["supercell"] = [{"size": L, "value": v} for L, v in zip(sizes, estimates)]
                self.report.check("tpuv_supercell_difference", abs(estimates[-1] - bloch_value))
                rows = np.column_stack([sizes, estimates, np.abs(np.asarray(estimates) - bloch_value)])
                self.artifact(write_table(self.out / "tpuv.csv", ["size", "value", "difference"], rows))
            else:
                logger.info("supercell traces skipped for d = %d", self.dimension)
        self.report.sections["tpuv"] = section


def run_pipeline(config: RunConfig, output_callback: Optional[Callable[[str], None]] = None) -> RunReport:
    """Run config.pipeline and write report.json/report.txt into config.out

    Raises:
        BlochWannierError: the first failing stage, with ``stage`` set; the
            report on disk records it.
    """
    return PipelineRunner(config, output_callback).run()
