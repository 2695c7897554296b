"""Relevant-band projector fields on uniform k-grids and their derivatives.

Crossing the Brillouin-zone boundary along axis j goes through the Zak
embedding V_j: P(kappa + e_j) = V_j P(kappa) V_j^dagger, with V_j the index
shift n -> n + e_j on coefficients (rows leaving the cutoff cube dropped).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from .bloch import PlaneWaveBasis, solve_bands, assemble_fiber, solve_grid
from .errors import ConfigError, DimensionError, GapError
from .model import LatticeModel

logger = logging.getLogger(__name__)

GridIndex = Tuple[int, ...]

DEFAULT_GAP_TOL = 1e-6
PROJECTOR_TOL = 1e-10


@dataclass(frozen=True)
class KGrid:
    """Uniform grid of reduced momenta.

    Points are kappa_j = i_j / N_j, or (i_j - N_j/2) / N_j when centered, so a
    centered grid covers [-1/2, 1/2)^d with kappa = 0 at index N/2.
    """

    counts: Tuple[int, ...]
    centered: bool = False

    def __post_init__(self) -> None:
        counts = tuple(int(n) for n in self.counts)
        if not counts or any(n < 1 for n in counts):
            raise ConfigError(f"grid counts must be positive, got {list(self.counts)}")
        if self.centered and any(n % 2 for n in counts):
            raise ConfigError(f"centered grids need even counts, got {list(counts)}")
        object.__setattr__(self, "counts", counts)

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def origin(self) -> GridIndex:
        """Index of kappa = 0"""
        return tuple(n // 2 for n in self.counts) if self.centered else (0,) * self.dimension

    def kappa(self, index: Sequence[int]) -> np.ndarray:
        counts = np.array(self.counts, dtype=float)
        idx = np.asarray(index, dtype=float)
        if self.centered:
            idx = idx - counts / 2
        return idx / counts

    def points(self) -> np.ndarray:
        """Array of shape counts + (d,)"""
        axes = []
        for n in self.counts:
            i = np.arange(n, dtype=float)
            axes.append((i - n / 2) / n if self.centered else i / n)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def indices(self) -> Iterator[GridIndex]:
        return iter(np.ndindex(*self.counts))

    def step(self, index: Sequence[int], axis: int, step: int = 1) -> Tuple[GridIndex, int]:
        """Neighbor index and the number of zone boundaries crossed (signed)"""
        index = list(index)
        raw = index[axis] + step
        crossed, index[axis] = divmod(raw, self.counts[axis])
        return tuple(index), crossed

    def negate(self, index: Sequence[int]) -> Tuple[GridIndex, np.ndarray]:
        """Grid index of -kappa and the integer shift s with -kappa = kappa(index') + s"""
        out, shifts = [], []
        for i, n in zip(index, self.counts):
            if self.centered:
                raw = n - i
            else:
                raw = -i
            crossed, j = divmod(raw, n)
            out.append(j)
            shifts.append(crossed)
        return tuple(out), np.array(shifts, dtype=int)


@dataclass(frozen=True)
class RelevantSet:
    """Band indices (0-based internally) of the relevant family"""

    bands: Tuple[int, ...]

    def __post_init__(self) -> None:
        bands = tuple(sorted(set(int(b) for b in self.bands)))
        if not bands:
            raise ConfigError("relevant band set must not be empty")
        if bands[0] < 0:
            raise ConfigError(f"band indices must be >= 1, got {bands[0] + 1}")
        object.__setattr__(self, "bands", bands)

    @classmethod
    def lowest(cls, m: int) -> "RelevantSet":
        return cls(tuple(range(m)))

    @property
    def m(self) -> int:
        return len(self.bands)

    def check(self, size: int) -> None:
        if self.bands[-1] >= size:
            raise ConfigError(f"band {self.bands[-1] + 1} exceeds basis size {size}")

    def complement(self, size: int) -> List[int]:
        chosen = set(self.bands)
        return [b for b in range(size) if b not in chosen]


class GapReport(BaseModel):
    """Smallest distance between relevant and remaining eigenvalues on the grid"""

    value: float
    location: List[float]
    tolerance: float
    passed: bool

    model_config = ConfigDict(ser_json_inf_nan="constants")


def gap_report(
    bands: np.ndarray,
    relevant: RelevantSet,
    grid: KGrid,
    tolerance: float = DEFAULT_GAP_TOL,
) -> GapReport:
    """Exact minimum over grid points of dist(relevant energies, other energies)

    Args:
        bands (np.ndarray): energies, shape grid.shape + (M,).
        relevant (RelevantSet): the selected band indices.
        grid (KGrid): grid the energies were computed on.
        tolerance (float): the gap passes when strictly above this.
    """
    size = bands.shape[-1]
    relevant.check(size)
    rest = relevant.complement(size)
    flat = bands.reshape(-1, size)
    if not rest:
        return GapReport(value=float("inf"), location=[], tolerance=tolerance, passed=True)
    chosen = flat[:, list(relevant.bands)]
    others = flat[:, rest]
    distance = np.min(np.abs(chosen[:, :, None] - others[:, None, :]), axis=(1, 2))
    worst = int(np.argmin(distance))
    index = np.unravel_index(worst, grid.shape)
    value = float(distance[worst])
    report = GapReport(
        value=value,
        location=grid.kappa(index).tolist(),
        tolerance=tolerance,
        passed=value > tolerance,
    )
    logger.info("gap C_g = %.6g at kappa=%s (pass=%s)", value, report.location, report.passed)
    return report


def _spectral_norm(stack: np.ndarray) -> np.ndarray:
    return np.linalg.norm(stack, ord=2, axis=(-2, -1))


def range_frame(projector: np.ndarray, rank: int) -> np.ndarray:
    """Orthonormal frame of the range of a projector (top eigenvectors)"""
    _, vectors = scipy.linalg.eigh(projector)
    return vectors[:, -rank:][:, ::-1]


@dataclass(frozen=True)
class ProjectorField:
    """P(kappa) on every grid point, shape grid.shape + (M, M)"""

    grid: KGrid
    matrices: np.ndarray
    rank: int
    embeddings: Tuple[np.ndarray, ...]
    cutoff: int = 0
    projector_at: Optional[Callable[[np.ndarray], np.ndarray]] = None
    frames: Optional[np.ndarray] = None
    energies: Optional[np.ndarray] = None
    gap: Optional[GapReport] = None
    label: str = "field"
    _identity_embeddings: bool = field(default=False, repr=False)

    def __post_init__(self) -> None:
        d = self.grid.dimension
        if self.matrices.shape[:d] != self.grid.shape:
            raise DimensionError(f"matrices of shape {self.matrices.shape} do not match grid {self.grid.shape}")
        if len(self.embeddings) != d:
            raise DimensionError("one embedding per axis required")
        identity = all(
            e.shape == (self.size, self.size) and np.array_equal(e, np.eye(self.size)) for e in self.embeddings
        )
        object.__setattr__(self, "_identity_embeddings", identity)

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def size(self) -> int:
        return self.matrices.shape[-1]

    def at(self, index: Sequence[int]) -> np.ndarray:
        return self.matrices[tuple(index)]

    def frame_at(self, index: Sequence[int]) -> np.ndarray:
        if self.frames is not None:
            return self.frames[tuple(index)]
        return range_frame(self.at(index), self.rank)

    def all_frames(self) -> np.ndarray:
        if self.frames is not None:
            return self.frames
        out = np.empty(self.grid.shape + (self.size, self.rank), dtype=complex)
        for index in self.grid.indices():
            out[index] = range_frame(self.at(index), self.rank)
        return out

    def embed(self, shifts: Sequence[int]) -> np.ndarray:
        """Matrix of the combined embedding for integer momentum shifts"""
        out = np.eye(self.size, dtype=complex)
        if self._identity_embeddings:
            return out
        for axis, s in enumerate(shifts):
            step = self.embeddings[axis] if s > 0 else self.embeddings[axis].conj().T
            for _ in range(abs(int(s))):
                out = step @ out
        return out

    def carry_vectors(self, vectors: np.ndarray, shifts: Sequence[int]) -> np.ndarray:
        """Zak frame of kappa -> kappa + shifts for coefficient vectors (last-but-one axis M)"""
        if self._identity_embeddings or not np.any(shifts):
            return vectors
        return self.embed(shifts) @ vectors

    def carry_matrices(self, matrices: np.ndarray, shifts: Sequence[int]) -> np.ndarray:
        if self._identity_embeddings or not np.any(shifts):
            return matrices
        V = self.embed(shifts)
        return V @ matrices @ V.conj().T

    def neighbor(self, index: Sequence[int], axis: int, step: int = 1) -> Tuple[Tuple[int, ...], np.ndarray]:
        """Projector at the neighboring point, expressed in the Zak frame of kappa + step/N"""
        target, crossed = self.grid.step(index, axis, step)
        shifts = np.zeros(self.dimension, dtype=int)
        shifts[axis] = crossed
        return target, self.carry_matrices(self.at(target), shifts)

    def neighbor_slab(self, axis: int, step: int) -> np.ndarray:
        """All projectors shifted by one grid step along axis, wrap through the embedding"""
        rolled = np.roll(self.matrices, -step, axis=axis)
        if self._identity_embeddings:
            return rolled
        n = self.grid.counts[axis]
        edge = n - 1 if step > 0 else 0
        source = 0 if step > 0 else n - 1
        shifts = np.zeros(self.dimension, dtype=int)
        shifts[axis] = 1 if step > 0 else -1
        take = [slice(None)] * self.dimension
        take[axis] = source
        put = [slice(None)] * self.dimension
        put[axis] = edge
        rolled[tuple(put)] = self.carry_matrices(self.matrices[tuple(take)], shifts)
        return rolled

    def matrix_at(self, kappa: np.ndarray) -> np.ndarray:
        if self.projector_at is None:
            raise ConfigError(f"{self.label}: off-grid projectors are not available")
        return self.projector_at(np.asarray(kappa, dtype=float))

    def negative(self, index: Sequence[int]) -> np.ndarray:
        """P(-kappa) for a grid point; recomputed when possible, else through the embedding"""
        if self.projector_at is not None:
            return self.matrix_at(-self.grid.kappa(index))
        target, shifts = self.grid.negate(index)
        return self.carry_matrices(self.at(target), shifts)

    def invariant_residuals(self) -> Tuple[float, float, float]:
        """(idempotency, hermiticity, trace) maxima over the grid"""
        P = self.matrices
        idem = float(np.max(np.abs(P @ P - P)))
        herm = float(np.max(np.abs(P - np.swapaxes(P.conj(), -1, -2))))
        trace = float(np.max(np.abs(np.einsum("...ii->...", P) - self.rank)))
        return idem, herm, trace


def build_projector_field(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    grid: KGrid,
    relevant: RelevantSet,
    gap_tolerance: float = DEFAULT_GAP_TOL,
    threads: int = 1,
) -> ProjectorField:
    """Eigenprojection sum over the relevant bands at every grid point.

    Raises:
        GapError: when the relevant bands touch the rest somewhere on the grid.
    """
    if grid.dimension != model.dimension:
        raise DimensionError(f"grid has dimension {grid.dimension}, model {model.dimension}")
    relevant.check(basis.size)
    points = grid.points().reshape(-1, grid.dimension)
    solutions = solve_grid(model, basis, points, threads)
    energies = np.array([s.energies for s in solutions]).reshape(grid.shape + (basis.size,))
    gap = gap_report(energies, relevant, grid, gap_tolerance)
    if not gap.passed:
        raise GapError(
            f"relevant bands {[b + 1 for b in relevant.bands]} are not isolated: "
            f"C_g = {gap.value:.3e} at kappa={gap.location}",
            details={"gap": gap.model_dump()},
        )
    cols = list(relevant.bands)
    frames = np.array([s.vectors[:, cols] for s in solutions]).reshape(grid.shape + (basis.size, relevant.m))
    matrices = frames @ np.swapaxes(frames.conj(), -1, -2)

    def projector_at(kappa: np.ndarray) -> np.ndarray:
        return solve_bands(assemble_fiber(model, basis, kappa)).projector(cols)

    embeddings = tuple(basis.shift_matrix(j, +1).astype(complex) for j in range(grid.dimension))
    logger.info(
        "projector field %s: grid %s, M=%d, m=%d", model.name, list(grid.shape), basis.size, relevant.m
    )
    return ProjectorField(
        grid=grid,
        matrices=matrices,
        rank=relevant.m,
        embeddings=embeddings,
        cutoff=basis.cutoff,
        projector_at=projector_at,
        frames=frames,
        energies=energies,
        gap=gap,
        label=model.name,
    )


@dataclass(frozen=True)
class EmbeddingReport:
    axis: int
    matrix: np.ndarray
    residual: float


def boundary_embedding(field: ProjectorField, axis: int) -> EmbeddingReport:
    """V_axis and max over the face kappa_axis = first grid value of ||P(kappa + e) - V P V^dagger||"""
    V = field.embeddings[axis]
    residual = float("nan")
    if field.projector_at is not None:
        worst = 0.0
        shift = np.zeros(field.dimension)
        shift[axis] = 1.0
        for index in field.grid.indices():
            if index[axis] != 0:
                continue
            expected = field.matrix_at(field.grid.kappa(index) + shift)
            carried = V @ field.at(index) @ V.conj().T
            worst = max(worst, float(np.linalg.norm(expected - carried, ord=2)))
        residual = worst
    logger.info("embedding along axis %d: truncation residual %.3e", axis + 1, residual)
    return EmbeddingReport(axis=axis, matrix=V, residual=residual)


def projector_derivative(field: ProjectorField, axis: int) -> np.ndarray:
    """Central difference d P / d kappa_axis, symmetrized"""
    n = field.grid.counts[axis]
    if n < 4:
        raise ConfigError(f"derivatives need at least 4 grid points along axis {axis + 1}, got {n}")
    forward = field.neighbor_slab(axis, +1)
    backward = field.neighbor_slab(axis, -1)
    derivative = (forward - backward) * (n / 2.0)
    return 0.5 * (derivative + np.swapaxes(derivative.conj(), -1, -2))


def all_derivatives(field: ProjectorField) -> List[np.ndarray]:
    return [projector_derivative(field, j) for j in range(field.dimension)]


def q_tilde(
    field: ProjectorField,
    i: int,
    j: int,
    derivatives: Optional[Sequence[np.ndarray]] = None,
) -> np.ndarray:
    """P [d_i P, d_j P] P at every grid point"""
    if i == j:
        return np.zeros_like(field.matrices)
    if derivatives is None:
        Di, Dj = projector_derivative(field, i), projector_derivative(field, j)
    else:
        Di, Dj = derivatives[i], derivatives[j]
    P = field.matrices
    return P @ (Di @ Dj - Dj @ Di) @ P


def w_tilde(
    field: ProjectorField,
    derivatives: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, float]:
    """Tr(Q12 Q34 - Q13 Q24 + Q14 Q23) per grid point, and its largest imaginary part"""
    if field.dimension != 4:
        raise DimensionError(f"W is defined for d = 4 only, got d = {field.dimension}")
    derivatives = derivatives if derivatives is not None else all_derivatives(field)
    Q = {(a, b): q_tilde(field, a, b, derivatives) for a, b in itertools.combinations(range(4), 2)}
    W = Q[(0, 1)] @ Q[(2, 3)] - Q[(0, 2)] @ Q[(1, 3)] + Q[(0, 3)] @ Q[(1, 2)]
    trace = np.einsum("...ii->...", W)
    imaginary = float(np.max(np.abs(trace.imag))) if trace.size else 0.0
    if imaginary > 1e-10:
        logger.warning("Tr W has imaginary part up to %.3e", imaginary)
    return trace.real, imaginary


def max_neighbor_difference(field: ProjectorField) -> float:
    """max over grid edges of ||P(kappa + delta) - P(kappa)|| (spectral norm)"""
    worst = 0.0
    for axis in range(field.dimension):
        diff = field.neighbor_slab(axis, +1) - field.matrices
        worst = max(worst, float(np.max(_spectral_norm(diff))))
    return worst


def shifted_frames(
    field: ProjectorField,
    frames: np.ndarray,
    local_axis: int,
    global_axis: Optional[int] = None,
) -> np.ndarray:
    """Frames at kappa + e/N along one axis of a (sub-)grid, the wrapped slab carried by the embedding

    ``frames`` has the grid axes first and (M, m) last; ``local_axis`` indexes
    those grid axes and ``global_axis`` names the momentum axis it runs along.
    """
    global_axis = local_axis if global_axis is None else global_axis
    rolled = np.roll(frames, -1, axis=local_axis)
    shifts = np.zeros(field.dimension, dtype=int)
    shifts[global_axis] = 1
    last: List[object] = [slice(None)] * (frames.ndim - 2)
    last[local_axis] = -1
    first: List[object] = [slice(None)] * (frames.ndim - 2)
    first[local_axis] = 0
    rolled[tuple(last)] = field.carry_vectors(frames[tuple(first)], shifts)
    return rolled
