"""Global Bloch gauges, Wannier functions and their decay.

The rank-one construction works on a centered grid: it fixes a
time-reversal-invariant vector at kappa = 0 and extends it one axis at a
time by parallel transport on the positive half, reflection through time
reversal on the negative half, and a linear phase that closes the loop
across the zone boundary.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy.stats import linregress

from .bloch import PlaneWaveBasis
from .errors import (
    ConfigError,
    GridTooCoarseError,
    NumericalDegeneracyError,
    ObstructionError,
    TransportBreakdownError,
    TrialFailureError,
    WindingObstructionError,
)
from .model import Lattice
from .projector import ProjectorField, range_frame, shifted_frames
from .symmetry import AntiunitaryFiberOp, collocation_points, trs_projector_residual

logger = logging.getLogger(__name__)

FIX_TOL = 1e-6
BREAKDOWN_TOL = 1e-8
TRIAL_TOL = 1e-6
MASS_FLOOR = 1e-14
MIN_SHELLS = 4
UNWRAP_STEP_LIMIT = 0.9 * np.pi

TrialSource = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SectionField:
    """Orthonormal frames psi_1..psi_m at every grid point, shape grid.shape + (M, m)"""

    field: ProjectorField
    frames: np.ndarray
    periodicity_residual: float = 0.0
    trs_residual: Optional[float] = None
    min_singular: Optional[float] = None
    label: str = "section"

    @property
    def grid(self):
        return self.field.grid

    @property
    def rank(self) -> int:
        return self.frames.shape[-1]

    def range_residual(self) -> float:
        """max ||P psi - psi||"""
        return float(np.max(np.abs(self.field.matrices @ self.frames - self.frames)))

    def orthonormality_residual(self) -> float:
        gram = np.swapaxes(self.frames.conj(), -1, -2) @ self.frames
        return float(np.max(np.abs(gram - np.eye(self.rank))))


def trs_fix_origin(psi: np.ndarray, J: AntiunitaryFiberOp) -> np.ndarray:
    """Unit vector phi on the line of psi with J phi = phi

    Raises:
        NumericalDegeneracyError: neither psi + J psi nor its i-rotated variant survives.
    """
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    for candidate in (psi, 1j * psi):
        phi = candidate + J.apply(candidate)
        norm = np.linalg.norm(phi)
        if norm >= FIX_TOL:
            return phi / norm
    raise NumericalDegeneracyError("cannot build a time-reversal fixed vector at kappa = 0")


def orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal frame of the column span; QR run twice, diagonal of R made positive"""
    singular = np.linalg.svd(vectors, compute_uv=False)
    smallest = float(np.min(singular))
    if smallest < BREAKDOWN_TOL:
        raise TransportBreakdownError(f"transported frame collapsed (sigma_min = {smallest:.2e})")
    Q = vectors
    for _ in range(2):
        Q, R = np.linalg.qr(Q)
        diagonal = np.diagonal(R, axis1=-2, axis2=-1)
        Q = Q * (np.abs(diagonal) / diagonal)[..., None, :]
    return Q


def parallel_transport(
    field: ProjectorField,
    start: np.ndarray,
    origin: Sequence[int],
    moves: Sequence[Tuple[int, int]],
) -> np.ndarray:
    """Transport a frame along a path of grid steps (axis, +-1)

    Each frame is expressed in the Zak frame of its unwrapped momentum, so a
    closed loop that winds around the zone returns in the carried frame.

    Returns:
        np.ndarray: frames of shape (len(moves) + 1, M, m).
    """
    frame = np.asarray(start, dtype=complex)
    if frame.ndim == 1:
        frame = frame[:, None]
    index = tuple(origin)
    shifts = np.zeros(field.dimension, dtype=int)
    frames = [frame]
    for axis, step in moves:
        index, crossed = field.grid.step(index, axis, step)
        shifts[axis] += crossed
        projector = field.carry_matrices(field.at(index), shifts)
        frame = orthonormalize(projector @ frame)
        frames.append(frame)
    return np.array(frames)


def loop_holonomy(field: ProjectorField, origin: Sequence[int], plane: Tuple[int, int]) -> float:
    """Phase acquired by a transported vector around kappa -> +e_j -> +e_i -> -e_j -> -e_i"""
    i, j = plane
    start = field.frame_at(origin)[:, :1]
    frames = parallel_transport(field, start, origin, [(j, 1), (i, 1), (j, -1), (i, -1)])
    return float(np.angle(np.vdot(start[:, 0], frames[-1][:, 0])))


def _transport_line(projectors: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """One rank-one transport step on a stack: v <- P v / |P v|"""
    moved = np.einsum("...ij,...j->...i", projectors, vectors)
    norms = np.linalg.norm(moved, axis=-1)
    smallest = float(np.min(norms)) if norms.size else 1.0
    if smallest < BREAKDOWN_TOL:
        raise TransportBreakdownError(f"transport step lost the range (norm {smallest:.2e})")
    return moved / norms[..., None]


def _project(projector: np.ndarray, vector: np.ndarray) -> np.ndarray:
    moved = projector @ vector
    return moved / np.linalg.norm(moved)


def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2 * np.pi) - np.pi


def _negated(values: np.ndarray) -> np.ndarray:
    """values at -kappa on a centered grid: index i -> (N - i) mod N on every axis"""
    axes = tuple(range(values.ndim))
    return np.roll(np.flip(values, axis=axes), 1, axis=axes) if axes else values


def _unwrap_from_center(theta: np.ndarray) -> np.ndarray:
    """Continuous branch of theta, anchored at the center index and continued outward axis by axis"""
    theta = theta.copy()
    for axis in range(theta.ndim):
        h = theta.shape[axis] // 2
        forward = np.take(theta, np.arange(h, theta.shape[axis]), axis=axis)
        backward = np.take(theta, np.arange(h, -1, -1), axis=axis)
        forward = np.unwrap(forward, axis=axis)
        backward = np.unwrap(backward, axis=axis)
        joined = np.concatenate([np.flip(np.take(backward, np.arange(1, h + 1), axis=axis), axis=axis), forward], axis=axis)
        theta = joined
    return theta


def check_mismatch_phase(theta: np.ndarray, label: str, stage: int) -> None:
    """Reject a mismatch phase that jumps between neighbors or winds along a loop of the lower axes"""
    for axis in range(theta.ndim):
        increments = _wrap(np.roll(theta, -1, axis=axis) - theta)
        jump = float(np.max(np.abs(increments)))
        if jump > UNWRAP_STEP_LIMIT:
            raise GridTooCoarseError(
                f"{label}: mismatch phase jumps by {jump:.3f} between neighbors at stage {stage + 1}; refine the grid",
                stage="wannier",
            )
        winding = np.rint(increments.sum(axis=axis) / (2 * np.pi)).astype(int)
        if np.any(winding != 0):
            raise WindingObstructionError(
                f"{label}: mismatch phase of axis {stage + 1} winds {int(np.max(np.abs(winding)))} times "
                f"along axis {axis + 1}",
                stage="wannier",
                details={"axis": stage + 1, "loop_axis": axis + 1},
            )


def _extend_axis(
    field: ProjectorField,
    J: AntiunitaryFiberOp,
    psi: np.ndarray,
    axis: int,
    evenness_tol: float,
) -> float:
    """Extend the section from the slice kappa_axis = 0 to the full axis; returns the boundary mismatch"""
    grid = field.grid
    d = grid.dimension
    n = grid.counts[axis]
    h = n // 2
    centers = [c // 2 for c in grid.counts]

    def slab(k: int) -> Tuple[object, ...]:
        return tuple([slice(None)] * axis + [k] + centers[axis + 1:])

    unit = np.zeros(d, dtype=int)
    unit[axis] = 1

    current = psi[slab(h)]
    for k in range(h + 1, n):
        current = _transport_line(field.matrices[slab(k)], current)
        psi[slab(k)] = current
    boundary = field.carry_matrices(field.matrices[slab(0)], unit)
    plus_half = _transport_line(boundary, current)

    sub_shape = grid.counts[:axis]
    for sub in np.ndindex(*sub_shape):
        point = tuple(sub) + (h,) + tuple(centers[axis + 1:])
        negated, shifts = grid.negate(point)
        source_sub = negated[:axis]
        for t in range(1, h + 1):
            if t < h:
                source = psi[tuple(source_sub) + (h + t,) + tuple(centers[axis + 1:])]
            else:
                source = plus_half[tuple(source_sub)]
            target = tuple(sub) + (h - t,) + tuple(centers[axis + 1:])
            reflected = J.apply(field.carry_vectors(source, shifts))
            psi[target] = _project(field.at(target), reflected)

    embed = field.embed(unit)
    minus_half = psi[slab(0)]
    overlap = np.einsum("...i,...i->...", (minus_half @ embed.T).conj(), plus_half)
    theta = np.asarray(np.angle(overlap))
    if axis == 0:
        theta = np.mod(theta, 2 * np.pi)
    else:
        check_mismatch_phase(theta, field.label, axis)
        theta = _unwrap_from_center(theta)
        mirror = _negated(theta)
        uneven = float(np.max(np.abs(mirror - theta)))
        if uneven > evenness_tol:
            raise ObstructionError(
                f"{field.label}: mismatch phase of axis {axis + 1} is not even (deviation {uneven:.2e})",
                stage="wannier",
            )
        theta = 0.5 * (theta + mirror)
        # branch in [0, 2pi) at the origin puts the center in cell 0
        theta = theta - 2 * np.pi * np.floor(theta[tuple(centers[:axis])] / (2 * np.pi))

    for k in range(n):
        kappa = (k - h) / n
        psi[slab(k)] *= np.exp(-1j * theta * kappa)[..., None]
    plus_half = plus_half * np.exp(-0.5j * theta)[..., None]
    mismatch = float(np.max(np.linalg.norm(plus_half - psi[slab(0)] @ embed.T, axis=-1)))
    logger.debug("axis %d closed with boundary mismatch %.3e", axis + 1, mismatch)
    return mismatch


def rank1_trs_gauge(
    field: ProjectorField,
    J: AntiunitaryFiberOp,
    trs_tol: float = 1e-4,
    evenness_tol: float = 1e-3,
) -> SectionField:
    """Smooth periodic time-reversal-symmetric section of a rank-one projector field

    Raises:
        ConfigError: rank is not one or the grid is not centered.
        ObstructionError: the field is not time-reversal symmetric, or a
            mismatch phase winds (WindingObstructionError) or is not even.
        GridTooCoarseError: the mismatch phase is not resolved by the grid.
        TransportBreakdownError: transport left the range.
    """
    if field.rank != 1:
        raise ConfigError(f"the time-reversal gauge needs a single band, got m = {field.rank}")
    if not field.grid.centered:
        raise ConfigError("the time-reversal gauge needs a centered grid with even counts")
    residual = trs_projector_residual(field, J)
    if residual > trs_tol:
        raise ObstructionError(
            f"{field.label}: projector field is not time-reversal symmetric (residual {residual:.2e} > {trs_tol:.1e})",
            stage="wannier",
            details={"trs_residual": residual},
        )
    grid = field.grid
    psi = np.zeros(grid.shape + (field.size,), dtype=complex)
    origin = grid.origin
    psi[origin] = trs_fix_origin(range_frame(field.at(origin), 1)[:, 0], J)

    periodicity = 0.0
    for axis in range(grid.dimension):
        periodicity = max(periodicity, _extend_axis(field, J, psi, axis, evenness_tol))

    section = SectionField(field=field, frames=psi[..., None], periodicity_residual=periodicity, label=field.label)
    trs = section_trs_residual(section, J)
    logger.info(
        "%s: rank-one gauge built, periodicity %.2e, time reversal %.2e", field.label, periodicity, trs
    )
    return SectionField(
        field=field, frames=section.frames, periodicity_residual=periodicity, trs_residual=trs, label=field.label
    )


def section_trs_residual(section: SectionField, J: AntiunitaryFiberOp) -> float:
    """max over the grid of ||psi(-kappa) - J psi(kappa)||"""
    field = section.field
    worst = 0.0
    for index in field.grid.indices():
        negated, shifts = field.grid.negate(index)
        mirrored = field.carry_vectors(section.frames[negated], shifts)
        worst = max(worst, float(np.max(np.abs(mirrored - J.apply(section.frames[index])))))
    return worst


def gaussian_trials(
    basis: PlaneWaveBasis,
    lattice: Lattice,
    centers: Sequence[Sequence[float]],
    widths: Sequence[float],
) -> Callable[[np.ndarray], np.ndarray]:
    """Zak coefficients exp(-|k+G|^2 w^2 / 2) exp(-i (k+G).x_c) of Gaussians at fractional centers"""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    widths = np.asarray(widths, dtype=float)
    if len(widths) != len(centers):
        raise ConfigError("each trial needs a center and a width")
    G = lattice.reciprocal(basis.indices)
    positions = lattice.cartesian(centers)

    def trials(kappa: np.ndarray) -> np.ndarray:
        q = lattice.momentum(kappa)[None, :] + G
        envelope = np.exp(-0.5 * np.einsum("ij,ij->i", q, q)[:, None] * widths[None, :] ** 2)
        return envelope * np.exp(-1j * q @ positions.T)

    return trials


def multiband_projection_gauge(field: ProjectorField, trials: TrialSource) -> SectionField:
    """Project the trials and orthonormalize them symmetrically (Loewdin)

    Raises:
        TrialFailureError: the projected trials become dependent somewhere on the grid.
    """
    grid = field.grid
    points = grid.points()
    if callable(trials):
        g = np.array([trials(k) for k in points.reshape(-1, grid.dimension)])
        g = g.reshape(grid.shape + g.shape[1:])
    else:
        g = np.broadcast_to(np.asarray(trials, dtype=complex), grid.shape + np.shape(trials))
    if g.shape[-1] != field.rank:
        raise ConfigError(f"need {field.rank} trial vectors, got {g.shape[-1]}")
    projected = field.matrices @ g
    overlap = np.swapaxes(projected.conj(), -1, -2) @ projected
    values, vectors = np.linalg.eigh(overlap)
    smallest = values[..., 0]
    worst = np.unravel_index(int(np.argmin(smallest)), grid.shape)
    sigma = float(smallest[worst])
    if sigma < TRIAL_TOL:
        kappa = grid.kappa(worst).tolist()
        raise TrialFailureError(
            f"{field.label}: projected trials are dependent at kappa={kappa} (sigma_min = {sigma:.2e})",
            stage="wannier",
            details={"kappa": kappa, "sigma_min": sigma},
        )
    inverse_root = vectors @ (values[..., :, None] ** -0.5 * np.swapaxes(vectors.conj(), -1, -2))
    frames = projected @ inverse_root
    logger.info("%s: projection gauge with sigma_min %.3e", field.label, sigma)
    return SectionField(field=field, frames=frames, min_singular=sigma, label=field.label)


def gauge_smoothness(section: SectionField) -> float:
    """max over grid edges and bands of ||psi_a(kappa + delta) - psi_a(kappa)||"""
    worst = 0.0
    for axis in range(section.grid.dimension):
        following = shifted_frames(section.field, section.frames, axis)
        worst = max(worst, float(np.max(np.linalg.norm(following - section.frames, axis=-2))))
    return worst


@dataclass(frozen=True)
class WannierFunction:
    """Samples of one Wannier function on the discrete torus of cells

    ``samples`` has the cell axes first (FFT order, matching ``cells``) and
    the points of one cell last; orbital (basis-free) sections carry their
    internal components there instead.
    """

    band: int
    counts: Tuple[int, ...]
    resolution: int
    samples: np.ndarray
    cells: np.ndarray
    masses: np.ndarray
    distances: np.ndarray
    weight: float
    half_width: float

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.masses**2)))

    def mass_at(self, gamma: Sequence[int]) -> float:
        index = tuple(int(g) % n for g, n in zip(gamma, self.counts))
        return float(self.masses[index])


def _signed_cells(counts: Tuple[int, ...]) -> np.ndarray:
    axes = [((np.arange(n) + n // 2) % n) - n // 2 for n in counts]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def inverse_bf(
    section: SectionField,
    lattice: Optional[Lattice] = None,
    resolution: Optional[int] = None,
) -> List[WannierFunction]:
    """Wannier functions w(gamma + y) = N^-d sum_kappa exp(i k.(gamma + y)) u_kappa(y), one per band"""
    field = section.field
    grid = field.grid
    d = grid.dimension
    lattice = lattice or Lattice.cubic(d)
    axes = tuple(range(d))
    kappas = grid.points()
    cells = _signed_cells(grid.counts)
    cartesian = lattice.cartesian(cells.reshape(-1, d)).reshape(cells.shape)
    distances = np.linalg.norm(cartesian, axis=-1)
    half_width = float(min(n / 2 * np.linalg.norm(lattice.basis[j]) for j, n in enumerate(grid.counts)))

    if field.cutoff > 0:
        basis = PlaneWaveBasis(d, field.cutoff)
        resolution = resolution or 2 * field.cutoff + 2
        points = collocation_points(d, resolution)
        synthesis = np.exp(2j * np.pi * points @ basis.indices.T) / np.sqrt(lattice.volume)
        bloch_phase = np.exp(2j * np.pi * kappas @ points.T)
        weight = lattice.volume / len(points)
    else:
        resolution = 1
        synthesis = None
        bloch_phase = None
        weight = 1.0

    result = []
    for band in range(section.rank):
        coefficients = section.frames[..., band]
        if synthesis is not None:
            values = (coefficients @ synthesis.T) * bloch_phase
        else:
            values = coefficients
        samples = np.fft.ifftn(values, axes=axes)
        if grid.centered:
            samples = samples * np.exp(-1j * np.pi * cells.sum(axis=-1))[..., None]
        masses = np.sqrt(weight * np.sum(np.abs(samples) ** 2, axis=-1))
        w = WannierFunction(
            band=band,
            counts=grid.counts,
            resolution=resolution,
            samples=samples,
            cells=cells,
            masses=masses,
            distances=distances,
            weight=weight,
            half_width=half_width,
        )
        logger.info("%s: Wannier function %d has norm %.12f", field.label, band + 1, w.norm())
        result.append(w)
    return result


def translate_overlaps(w: WannierFunction) -> np.ndarray:
    """<w, w(. - gamma)> for every cell shift gamma (FFT order, like w.cells)"""
    axes = tuple(range(len(w.counts)))
    out = np.empty(w.counts, dtype=complex)
    for shift in np.ndindex(*w.counts):
        moved = np.roll(w.samples, shift, axis=axes)
        out[shift] = w.weight * np.vdot(w.samples, moved)
    return out


class DecayFit(BaseModel):
    rate: float
    r_squared: float
    r_min: float
    r_max: float
    shells: int
    capped: bool


def fit_shell_decay(
    distances: np.ndarray,
    masses: np.ndarray,
    half_width: float,
    window: Optional[Tuple[float, float]] = None,
) -> DecayFit:
    """Fit log of the per-shell maximum mass against distance; slope -b

    Shells are unit-width bins floor(|gamma|). Only shells inside ``window``
    and below the half width of the supercell enter the fit; the default
    window skips the core shell 0.
    """
    distances = np.asarray(distances, dtype=float).ravel()
    masses = np.asarray(masses, dtype=float).ravel()
    r_lo, r_hi = window if window is not None else (1.0, half_width)
    if r_hi < r_lo:
        raise ConfigError(f"decay window ({r_lo}, {r_hi}) is empty")
    bins = np.floor(distances + 1e-9).astype(int)
    radii, peaks = [], []
    for r in np.unique(bins):
        if r < r_lo or r > r_hi or r >= half_width:
            continue
        peak = float(np.max(masses[bins == r]))
        if peak > MASS_FLOOR:
            radii.append(float(r))
            peaks.append(peak)
    r_min = radii[0] if radii else max(1.0, float(np.ceil(r_lo)))
    if len(radii) < MIN_SHELLS:
        core = masses[bins == 0]
        origin = float(np.max(core)) if core.size else 1.0
        rate = float(np.log(max(origin, MASS_FLOOR) / MASS_FLOOR) / r_min)
        logger.warning("only %d usable shells; decay rate capped at %.3f", len(radii), rate)
        return DecayFit(rate=rate, r_squared=0.0, r_min=r_min, r_max=r_min, shells=len(radii), capped=True)
    fit = linregress(radii, np.log(peaks))
    return DecayFit(
        rate=max(0.0, -float(fit.slope)),
        r_squared=float(fit.rvalue**2),
        r_min=radii[0],
        r_max=radii[-1],
        shells=len(radii),
        capped=False,
    )


def decay_fit(w: WannierFunction, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    fit = fit_shell_decay(w.distances, w.masses, w.half_width, window)
    logger.info("band %d decay rate b = %.4f (R^2 = %.4f, %d shells)", w.band + 1, fit.rate, fit.r_squared, fit.shells)
    return fit
