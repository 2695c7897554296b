"""Chern invariants of projector fields, trace per unit volume and the triviality verdict.

Every invariant has two estimators: a lattice (plaquette) one that is an
integer by construction and a curvature one built from projector
derivatives. The plaquette value anchors the curvature conventions.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field, ValidationError
from scipy import sparse

from .bloch import PlaneWaveBasis, solve_grid
from .errors import (
    ConfigError,
    DimensionError,
    EigensolverError,
    GridTooCoarseError,
    IncompleteInputError,
    NumericalDegeneracyError,
)
from .fixtures import dirac_field
from .model import LatticeModel, segment_circulations
from .projector import (
    KGrid,
    ProjectorField,
    RelevantSet,
    all_derivatives,
    q_tilde,
    shifted_frames,
    w_tilde,
)
from .symmetry import collocation_points

logger = logging.getLogger(__name__)

Plane = Tuple[int, int]

OVERLAP_TOL = 1e-8
BRANCH_GUARD = 1e-3
MIN_PLAQUETTE_POINTS = 6
CALIBRATION_FILE = "calibration.json"

Verdict = Literal["trivial", "non-trivial", "indeterminate-unstable-rank"]


@dataclass(frozen=True)
class PlaneChern:
    plane: Plane
    value: int
    flux_sum: float
    max_flux: float


@dataclass(frozen=True)
class CurvatureChern:
    plane: Plane
    value: float
    slices: np.ndarray


@dataclass(frozen=True)
class SecondChern:
    value: int
    raw: float
    residual: float


@dataclass(frozen=True)
class SecondChernCurvature:
    value: float
    average_trace: float
    imaginary: float


class Calibration(BaseModel):
    """Sign s and normalization nu relating Tr W to the plaquette second Chern number"""

    s: int = 1
    nu: float = 1.0
    grid: int = 12
    mass: float = 3.0


def _overlaps(frames: np.ndarray, shifted: np.ndarray) -> np.ndarray:
    return np.swapaxes(frames.conj(), -1, -2) @ shifted


def _check_points(field: ProjectorField, axes: Sequence[int]) -> None:
    for axis in axes:
        if field.grid.counts[axis] < MIN_PLAQUETTE_POINTS:
            raise ConfigError(
                f"plaquette methods need at least {MIN_PLAQUETTE_POINTS} points along axis {axis + 1}, "
                f"got {field.grid.counts[axis]}"
            )


def _abelian_links(field: ProjectorField, frames: np.ndarray, local_axis: int, global_axis: int) -> np.ndarray:
    det = np.linalg.det(_overlaps(frames, shifted_frames(field, frames, local_axis, global_axis)))
    smallest = float(np.min(np.abs(det)))
    if smallest < OVERLAP_TOL:
        raise GridTooCoarseError(
            f"{field.label}: overlap determinant {smallest:.2e} along axis {global_axis + 1}; refine the grid"
        )
    return det / np.abs(det)


def chern1_plaquette(
    field: ProjectorField,
    plane: Plane,
    transverse: Optional[Sequence[int]] = None,
) -> PlaneChern:
    """First Chern number of the plane (i, j) on the slice through the transverse indices

    Raises:
        GridTooCoarseError: a vanishing link or a plaquette flux too close to +-pi.
    """
    i, j = plane
    if i == j or not (0 <= i < field.dimension and 0 <= j < field.dimension):
        raise ConfigError(f"invalid plane {(i + 1, j + 1)} for d = {field.dimension}")
    _check_points(field, plane)
    transverse = list(transverse) if transverse is not None else [0] * field.dimension
    selector: List[object] = list(transverse)
    selector[i] = slice(None)
    selector[j] = slice(None)
    frames = field.all_frames()[tuple(selector)]
    if i > j:
        frames = np.swapaxes(frames, 0, 1)

    Ui = _abelian_links(field, frames, 0, i)
    Uj = _abelian_links(field, frames, 1, j)
    loop = Uj * np.roll(Ui, -1, axis=1) * np.roll(Uj, -1, axis=0).conj() * Ui.conj()
    flux = np.angle(loop)
    worst = float(np.max(np.abs(flux)))
    if worst >= np.pi - BRANCH_GUARD:
        raise GridTooCoarseError(f"{field.label}: plaquette flux {worst:.4f} near the branch cut; refine the grid")
    total = float(flux.sum())
    value = int(round(total / (2 * np.pi)))
    logger.info("c1 plane %s of %s: %d (flux sum/2pi = %.6f)", (i + 1, j + 1), field.label, value, total / (2 * np.pi))
    return PlaneChern(plane=plane, value=value, flux_sum=total, max_flux=worst)


def chern1_curvature(
    field: ProjectorField,
    plane: Plane,
    derivatives: Optional[Sequence[np.ndarray]] = None,
) -> CurvatureChern:
    """(i/2pi) times the plane average of Tr Q_ij, per transverse slice"""
    i, j = plane
    trace = np.einsum("...aa->...", q_tilde(field, i, j, derivatives))
    density = (1j * trace / (2 * np.pi)).real
    slices = density.mean(axis=(i, j))
    return CurvatureChern(plane=plane, value=float(density.mean()), slices=np.atleast_1d(slices))


def all_planes(dimension: int) -> List[Plane]:
    return list(itertools.combinations(range(dimension), 2))


def _unitary_links(field: ProjectorField, frames: np.ndarray, axis: int) -> np.ndarray:
    """Polar (unitary) part of the frame overlaps along axis"""
    overlaps = _overlaps(frames, shifted_frames(field, frames, axis, axis))
    u, s, vh = np.linalg.svd(overlaps)
    smallest = float(np.min(s))
    if smallest < OVERLAP_TOL:
        raise GridTooCoarseError(f"{field.label}: singular link along axis {axis + 1} ({smallest:.2e})")
    return u @ vh


def _principal_log(W: np.ndarray, label: str) -> np.ndarray:
    """Principal logarithm of a stack of unitary matrices"""
    values, vectors = np.linalg.eig(W)
    phases = np.angle(values)
    worst = float(np.max(np.abs(phases)))
    if worst >= np.pi - BRANCH_GUARD:
        raise GridTooCoarseError(f"{label}: plaquette holonomy eigenvalue near -1; refine the grid")
    logs = 1j * phases + np.log(np.abs(values))
    return vectors @ (logs[..., :, None] * np.linalg.inv(vectors))


def chern2_plaquette(field: ProjectorField) -> SecondChern:
    """Lattice field-strength estimate of the second Chern number (d = 4)"""
    if field.dimension != 4:
        raise DimensionError(f"second Chern number needs d = 4, got {field.dimension}")
    _check_points(field, range(4))
    frames = field.all_frames()
    links = [_unitary_links(field, frames, mu) for mu in range(4)]
    F: Dict[Plane, np.ndarray] = {}
    for mu, nu in all_planes(4):
        Umu, Unu = links[mu], links[nu]
        W = (
            Umu
            @ np.roll(Unu, -1, axis=mu)
            @ np.swapaxes(np.roll(Umu, -1, axis=nu).conj(), -1, -2)
            @ np.swapaxes(Unu.conj(), -1, -2)
        )
        F[(mu, nu)] = _principal_log(W, field.label)
    density = np.einsum(
        "...ab,...ba->...", F[(0, 1)], F[(2, 3)]
    ) - np.einsum("...ab,...ba->...", F[(0, 2)], F[(1, 3)]) + np.einsum("...ab,...ba->...", F[(0, 3)], F[(1, 2)])
    raw = float(density.sum().real) / (4 * np.pi**2)
    value = int(round(raw))
    logger.info("c2 (plaquette) of %s: %d (raw %.6f)", field.label, value, raw)
    return SecondChern(value=value, raw=raw, residual=abs(raw - value))


def load_calibration(path: Optional[Path] = None) -> Calibration:
    if path is not None:
        try:
            return Calibration.model_validate_json(Path(path).read_text())
        except (OSError, ValidationError) as e:
            raise ConfigError(f"cannot load calibration {path}: {e}") from e
    text = resources.files(__package__).joinpath(CALIBRATION_FILE).read_text()
    return Calibration.model_validate_json(text)


def save_calibration(calibration: Calibration, path: Path) -> None:
    Path(path).write_text(json.dumps(calibration.model_dump(), indent=2) + "\n")


def chern2_curvature(
    field: ProjectorField,
    calibration: Optional[Calibration] = None,
    derivatives: Optional[Sequence[np.ndarray]] = None,
) -> SecondChernCurvature:
    """s / ((2pi)^2 nu) times the grid average of Tr W"""
    calibration = calibration or load_calibration()
    trace, imaginary = w_tilde(field, derivatives)
    average = float(trace.mean())
    value = calibration.s * average / ((2 * np.pi) ** 2 * calibration.nu)
    logger.info("c2 (curvature) of %s: %.6f", field.label, value)
    return SecondChernCurvature(value=value, average_trace=average, imaginary=imaginary)


def calibrate_chern2(grid: int = 12, mass: float = 3.0) -> Calibration:
    """Fix (s, nu) so that the curvature estimate reproduces the plaquette integer on the Dirac field

    Raises:
        NumericalDegeneracyError: the reference field has zero second Chern number.
    """
    field = dirac_field(KGrid((grid,) * 4), mass)
    reference = chern2_plaquette(field).value
    if reference == 0:
        raise NumericalDegeneracyError(f"Dirac field with mass {mass} has c2 = 0; cannot calibrate")
    average = chern2_curvature(field, Calibration(s=1, nu=1.0)).average_trace / (2 * np.pi) ** 2
    calibration = Calibration(
        s=1 if average * reference > 0 else -1,
        nu=abs(average / reference),
        grid=grid,
        mass=mass,
    )
    logger.info("calibration at grid %d: s=%d nu=%.6f", grid, calibration.s, calibration.nu)
    return calibration


def tpuv_bloch(traces: np.ndarray, volume: float) -> float:
    """Grid average of Tr Y(kappa), per unit cell volume"""
    traces = np.asarray(traces)
    if traces.size == 0:
        raise ConfigError("trace per unit volume needs at least one sample")
    return float(np.mean(traces.real)) / volume


SpectralWeight = Callable[[np.ndarray], np.ndarray]

MAX_SUPERCELL_POINTS = 4000
WINDOW_GRID = 16


def supercell_points(size: int, dimension: int, resolution: int) -> int:
    """Interior sample points of an open box of size^d cells"""
    return (size * resolution - 1) ** dimension


def _energy_window(
    model: LatticeModel, basis: PlaneWaveBasis, relevant: RelevantSet, resolution: int, threads: int
) -> Tuple[float, float]:
    """Gap midpoints around a contiguous relevant set, from Bloch energies on a coarse grid"""
    bands = list(relevant.bands)
    if bands != list(range(bands[0], bands[-1] + 1)):
        raise ConfigError(f"supercell traces need contiguous bands, got {[b + 1 for b in bands]}")
    if bands[-1] + 1 >= basis.size:
        raise ConfigError(f"band {bands[-1] + 2} is outside the basis of size {basis.size}")
    d = model.dimension
    grid = KGrid((WINDOW_GRID,) * d)
    energies = np.array([s.energies for s in solve_grid(model, basis, grid.points().reshape(-1, d), threads)])
    upper = 0.5 * (energies[:, bands[-1]].max() + energies[:, bands[-1] + 1].min())
    if bands[0] > 0:
        lower = 0.5 * (energies[:, bands[0] - 1].max() + energies[:, bands[0]].min())
    else:
        # the box operator is bounded below by min V over its sample points
        samples = model.lattice.cartesian(collocation_points(d, resolution))
        lower = float(model.potential.evaluate(model.lattice, samples).real.min()) - 1.0
    return float(lower), float(upper)


def box_hamiltonian(model: LatticeModel, size: int, resolution: int) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Finite-difference Hamiltonian on the open box [0, size]^d (fractional), Dirichlet walls

    Hopping along e_j carries the Peierls phase exp(-i int A.dl) of the
    bond. Returns the operator and the integer coordinates (1..size*R - 1)
    of its sample points.
    """
    lattice = model.lattice
    d = model.dimension
    gram = lattice.basis @ lattice.basis.T
    if np.max(np.abs(gram - np.diag(np.diag(gram)))) > 1e-12 * np.max(np.abs(gram)):
        raise ConfigError("supercell traces need an orthogonal lattice")
    n = size * resolution - 1
    total = n**d
    if total > MAX_SUPERCELL_POINTS:
        raise ConfigError(f"supercell L={size} needs {total} points (limit {MAX_SUPERCELL_POINTS})")
    coords = np.stack(np.meshgrid(*[np.arange(1, n + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    x = lattice.cartesian(coords / resolution)
    flat = np.arange(total).reshape((n,) * d)
    spacing = np.linalg.norm(lattice.basis, axis=1) / resolution

    diagonal = model.potential.evaluate(lattice, x).real + np.sum(2.0 / spacing**2)
    rows, cols, values = [np.arange(total)], [np.arange(total)], [diagonal.astype(complex)]
    for j in range(d):
        source = np.take(flat, np.arange(n - 1), axis=j).ravel()
        target = np.take(flat, np.arange(1, n), axis=j).ravel()
        theta = segment_circulations(model.vector_potential, lattice, x[source], lattice.basis[j] / resolution)
        hop = -np.exp(-1j * theta) / spacing[j] ** 2
        rows += [source, target]
        cols += [target, source]
        values += [hop, hop.conj()]
    H = sparse.coo_matrix(
        (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))), shape=(total, total)
    ).tocsr()
    return H, coords


def tpuv_supercell(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    relevant: RelevantSet,
    sizes: Sequence[int],
    spectral_weight: Optional[SpectralWeight] = None,
    threads: int = 1,
    resolution: Optional[int] = None,
) -> List[float]:
    """Trace of Y per unit volume on the central ceil(L/2)^d cells of an open box of L^d cells

    Y = f(H_box) with f the indicator of the relevant energy window scaled by
    ``spectral_weight(E)`` (default 1, so Y is the spectral projector). The
    walls are far from the window, so the estimates converge to the Bloch
    value exponentially in L.
    """
    d = model.dimension
    if d > 2:
        raise DimensionError(f"supercell traces are limited to d <= 2, got {d}")
    if list(sizes) != sorted(set(sizes)) or min(sizes, default=1) < 1:
        raise ConfigError(f"supercell sizes must be positive and increase strictly, got {list(sizes)}")
    resolution = resolution or 4 * basis.cutoff + 2
    lower, upper = _energy_window(model, basis, relevant, resolution, threads)
    volume = model.lattice.volume
    estimates = []
    for L in sizes:
        H, coords = box_hamiltonian(model, L, resolution)
        try:
            energies, vectors = scipy.linalg.eigh(H.toarray(), subset_by_value=(lower, upper))
        except (np.linalg.LinAlgError, ValueError) as e:
            raise EigensolverError(f"box eigensolver failed at L={L}: {e}") from e
        weights = np.ones_like(energies) if spectral_weight is None else np.asarray(spectral_weight(energies), dtype=float)
        density = (np.abs(vectors) ** 2) @ weights
        w = math.ceil(L / 2)
        offset = (L - w) // 2
        cells = coords // resolution
        inside = np.all((cells >= offset) & (cells < offset + w), axis=1)
        estimate = float(density[inside].sum()) / (w**d * volume)
        estimates.append(estimate)
        logger.info("supercell L=%d: %d states in (%.3f, %.3f], T = %.8f", L, len(energies), lower, upper, estimate)
    return estimates


def random_periodic_multiplier(basis: PlaneWaveBasis, degree: int = 2, seed: int = 0) -> np.ndarray:
    """Fiber matrix of multiplication by a random real trigonometric polynomial (Toeplitz in n - n')"""
    rng = np.random.default_rng(seed)
    shape = (2 * degree + 1,) * basis.dimension
    coeffs = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    coeffs = 0.5 * (coeffs + np.conj(np.flip(coeffs)))
    dense = np.zeros((4 * basis.cutoff + 1,) * basis.dimension, dtype=complex)
    low = 2 * basis.cutoff - degree
    dense[tuple(slice(low, low + 2 * degree + 1) for _ in range(basis.dimension))] = coeffs
    offsets = tuple(basis.differences[..., j] for j in range(basis.dimension))
    return dense[offsets]


def trace_property_residual(field: ProjectorField, multiplier: np.ndarray, volume: float) -> float:
    """|T([X, P])| for a fiber-constant bounded periodic X"""
    P = field.matrices
    commutator = multiplier @ P - P @ multiplier
    return abs(tpuv_bloch(np.einsum("...aa->...", commutator), volume))


class VerdictReport(BaseModel):
    verdict: Verdict
    sigma: int
    generators: int
    frame_bound: int


def triviality_verdict(
    dimension: int,
    rank: int,
    c1: Optional[Dict[Plane, int]] = None,
    c2: Optional[int] = None,
    higher: Optional[Sequence[int]] = None,
) -> VerdictReport:
    """Decide triviality of the Bloch bundle from its Chern numbers

    Args:
        dimension (int): d.
        rank (int): m, the number of relevant bands.
        c1 (dict, optional): first Chern numbers per plane, if computed.
        c2 (int, optional): second Chern number, required for d = 4 with m >= 2 and for d >= 5.
        higher (sequence, optional): all remaining classes, required for d >= 5.

    Raises:
        IncompleteInputError: an invariant the rule depends on was not supplied.
    """
    if dimension < 1 or rank < 1:
        raise ConfigError(f"invalid dimension {dimension} or rank {rank}")
    c1 = c1 or {}
    first_nonzero = any(v != 0 for v in c1.values())
    if dimension <= 3 or rank == 1:
        verdict: Verdict = "non-trivial" if first_nonzero else "trivial"
    elif dimension == 4:
        if c2 is None:
            raise IncompleteInputError("d = 4 with m >= 2 needs the second Chern number")
        verdict = "trivial" if c2 == 0 and not first_nonzero else "non-trivial"
    else:
        if higher is None or c2 is None:
            raise IncompleteInputError(f"d = {dimension} needs c2 and every higher Chern class")
        vanishing = not first_nonzero and c2 == 0 and all(v == 0 for v in higher)
        if not vanishing:
            verdict = "non-trivial"
        elif dimension <= 2 * rank:
            verdict = "trivial"
        else:
            verdict = "indeterminate-unstable-rank"
    sigma = max(0, rank - dimension // 2)
    generators = min(rank, sigma + (1 if dimension % 4 == 2 else 0))
    frame_bound = 2**dimension * (rank - generators) + generators
    logger.info("verdict d=%d m=%d: %s (sigma=%d)", dimension, rank, verdict, sigma)
    return VerdictReport(verdict=verdict, sigma=sigma, generators=generators, frame_bound=frame_bound)


class PlaneEntry(BaseModel):
    plane: List[int]
    value: int
    residual: float
    curvature_value: Optional[float] = None


class SecondChernEntry(BaseModel):
    value: int
    residual: float
    curvature_value: Optional[float] = None


class ChernReport(BaseModel):
    c1: List[PlaneEntry] = Field(default_factory=list)
    c2: Optional[SecondChernEntry] = None
    instanton_charge: Optional[float] = None
    instanton_average: Optional[float] = None
    verdict: Verdict
    sigma: int
    generators: int
    frame_bound: int
    calibration: Calibration


def chern_report(
    field: ProjectorField,
    volume: float = 1.0,
    calibration: Optional[Calibration] = None,
    curvature: bool = True,
) -> ChernReport:
    """All first Chern numbers, the second one for d = 4, and the verdict"""
    calibration = calibration or load_calibration()
    derivatives = all_derivatives(field) if curvature else None
    entries = []
    c1: Dict[Plane, int] = {}
    for plane in all_planes(field.dimension):
        lattice_value = chern1_plaquette(field, plane)
        curved = chern1_curvature(field, plane, derivatives).value if curvature else None
        c1[plane] = lattice_value.value
        entries.append(
            PlaneEntry(
                plane=[plane[0] + 1, plane[1] + 1],
                value=lattice_value.value,
                residual=abs(lattice_value.flux_sum / (2 * np.pi) - lattice_value.value),
                curvature_value=curved,
            )
        )
    second = None
    charge = average = None
    c2_value = None
    if field.dimension == 4:
        lattice_second = chern2_plaquette(field)
        c2_value = lattice_second.value
        curved2 = chern2_curvature(field, calibration, derivatives) if curvature else None
        second = SecondChernEntry(
            value=lattice_second.value,
            residual=lattice_second.residual,
            curvature_value=curved2.value if curved2 else None,
        )
        if curved2 is not None:
            average = curved2.average_trace
            charge = average / volume
    verdict = triviality_verdict(field.dimension, field.rank, c1, c2_value)
    return ChernReport(
        c1=entries,
        c2=second,
        instanton_charge=charge,
        instanton_average=average,
        calibration=calibration,
        **verdict.model_dump(),
    )
