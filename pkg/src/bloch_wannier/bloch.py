"""Fiber Hamiltonians in a plane-wave (Zak) basis and their band structure.

Reduced momenta kappa parametrize k = sum_j kappa_j e*_j. The fiber at kappa
acts on periodic functions as (-i grad + k - A)^2 + V.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import scipy.linalg
from scipy.signal import convolve

from .errors import ConfigError, CutoffTooSmallError, EigensolverError
from .model import FourierScalar, Index, LatticeModel

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-10

T = TypeVar("T")


class PlaneWaveBasis:
    """Index vectors n with max_j |n_j| <= N, in lexicographic order"""

    def __init__(self, dimension: int, cutoff: int) -> None:
        if cutoff < 1:
            raise ConfigError(f"cutoff must be >= 1, got {cutoff}")
        self.dimension = dimension
        self.cutoff = cutoff
        self.indices = np.array(
            list(itertools.product(range(-cutoff, cutoff + 1), repeat=dimension)), dtype=int
        )
        self._lookup: Dict[Index, int] = {tuple(n): i for i, n in enumerate(self.indices)}
        self._differences: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"PlaneWaveBasis(dimension={self.dimension}, cutoff={self.cutoff}, size={self.size})"

    def position(self, n: Sequence[int]) -> Optional[int]:
        return self._lookup.get(tuple(int(v) for v in n))

    def origin(self) -> int:
        return self._lookup[(0,) * self.dimension]

    @property
    def differences(self) -> np.ndarray:
        """(M, M, d) array of n - n' offset into [0, 4N]"""
        if self._differences is None:
            self._differences = self.indices[:, None, :] - self.indices[None, :, :] + 2 * self.cutoff
        return self._differences

    def shift_matrix(self, axis: int, step: int = 1) -> np.ndarray:
        """Partial isometry with (S c)(n) = c(n + step e_axis); rows leaving the cube are zero"""
        shift = np.zeros((self.size, self.size))
        unit = np.zeros(self.dimension, dtype=int)
        unit[axis] = step
        for row, n in enumerate(self.indices):
            col = self.position(n + unit)
            if col is not None:
                shift[row, col] = 1.0
        return shift

    def reflection_matrix(self) -> np.ndarray:
        """Permutation c(n) -> c(-n)"""
        flip = np.zeros((self.size, self.size))
        for row, n in enumerate(self.indices):
            flip[row, self.position(-n)] = 1.0
        return flip


@dataclass(frozen=True)
class FiberMatrix:
    kappa: np.ndarray
    matrix: np.ndarray
    basis: PlaneWaveBasis

    def hermiticity_residual(self) -> float:
        scale = max(float(np.max(np.abs(self.matrix))), 1.0)
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) / scale


@dataclass(frozen=True)
class BandSolution:
    kappa: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray

    def band(self, index: int) -> np.ndarray:
        return self.vectors[:, index]

    def projector(self, bands: Sequence[int]) -> np.ndarray:
        frame = self.vectors[:, list(bands)]
        return frame @ frame.conj().T


class _CoefficientTables:
    """Dense V, A and A*A coefficient tables on offsets |n - n'| <= 2N"""

    def __init__(self, model: LatticeModel, basis: PlaneWaveBasis) -> None:
        reach = 2 * basis.cutoff
        if model.potential.cutoff > reach or model.vector_potential.cutoff > reach:
            raise CutoffTooSmallError(
                f"cutoff N={basis.cutoff} cannot represent potentials of degree "
                f"{max(model.potential.cutoff, model.vector_potential.cutoff)}; need N >= "
                f"{(max(model.potential.cutoff, model.vector_potential.cutoff) + 1) // 2}"
            )
        self.potential = model.potential.to_dense(reach)
        self.vector = model.vector_potential.to_dense(reach)
        self.square = np.zeros_like(self.potential)
        if not model.vector_potential.is_zero():
            window = tuple(slice(reach, 3 * reach + 1) for _ in range(model.dimension))
            for comp in self.vector:
                self.square += convolve(comp, comp, mode="full")[window]


def assemble_fiber(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    kappa: Sequence[float],
    tables: Optional[_CoefficientTables] = None,
) -> FiberMatrix:
    """H(n, n') = |k+G|^2 delta - A(n-n').(2k+G+G') + (A*A)(n-n') + V(n-n')"""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (model.dimension,):
        raise ConfigError(f"reduced momentum must have {model.dimension} components")
    tables = tables or _CoefficientTables(model, basis)
    lattice = model.lattice
    k = lattice.momentum(kappa)
    G = lattice.reciprocal(basis.indices)
    offsets = tuple(basis.differences[..., j] for j in range(model.dimension))

    kG = k[None, :] + G
    matrix = np.diag(np.einsum("ij,ij->i", kG, kG)).astype(complex)
    matrix += tables.potential[offsets] + tables.square[offsets]
    if not model.vector_potential.is_zero():
        for c in range(model.dimension):
            momentum = 2.0 * k[c] + G[:, None, c] + G[None, :, c]
            matrix -= tables.vector[c][offsets] * momentum
    matrix = 0.5 * (matrix + matrix.conj().T)
    return FiberMatrix(kappa=kappa, matrix=matrix, basis=basis)


def _canonicalize(energies: np.ndarray, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Largest-modulus entry of each vector real positive; degenerate clusters ordered by it"""
    moduli = np.abs(vectors)
    lead = np.argmax(moduli, axis=0)
    cols = np.arange(vectors.shape[1])
    pivots = vectors[lead, cols]
    vectors = vectors * (np.conj(pivots) / np.abs(pivots))[None, :]
    peak = moduli[lead, cols]

    order = np.arange(len(energies))
    start = 0
    for stop in range(1, len(energies) + 1):
        if stop == len(energies) or energies[stop] - energies[stop - 1] >= DEGENERACY_TOL:
            if stop - start > 1:
                cluster = order[start:stop]
                order[start:stop] = cluster[np.argsort(-peak[cluster], kind="stable")]
            start = stop
    return energies, vectors[:, order]


def solve_bands(fiber: FiberMatrix) -> BandSolution:
    """Full eigendecomposition with ascending energies and a deterministic gauge"""
    try:
        energies, vectors = scipy.linalg.eigh(fiber.matrix)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(
            f"eigensolver failed at kappa={fiber.kappa.tolist()}: {e}",
            details={"kappa": fiber.kappa.tolist()},
        ) from e
    energies, vectors = _canonicalize(energies, vectors)
    return BandSolution(kappa=fiber.kappa, energies=energies, vectors=vectors)


def parallel_map(func: Callable[[np.ndarray], T], points: Iterable[np.ndarray], threads: int = 1) -> List[T]:
    """Map over k-points; LAPACK releases the GIL so threads overlap"""
    points = list(points)
    if threads <= 1 or len(points) < 2:
        return [func(p) for p in points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, points))


def solve_grid(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    kappas: np.ndarray,
    threads: int = 1,
) -> List[BandSolution]:
    tables = _CoefficientTables(model, basis)

    def _solve(kappa: np.ndarray) -> BandSolution:
        return solve_bands(assemble_fiber(model, basis, kappa, tables))

    logger.debug("solving %d fibers of size %d", len(kappas), basis.size)
    return parallel_map(_solve, np.atleast_2d(kappas), threads)


def path_points(vertices: Sequence[Sequence[float]], points_per_segment: int) -> np.ndarray:
    """Straight segments through the vertices, endpoints included once"""
    vertices = np.asarray(vertices, dtype=float)
    if len(vertices) == 0:
        return np.zeros((0, 0))
    if len(vertices) == 1:
        return vertices.copy()
    pieces = []
    for a, b in zip(vertices[:-1], vertices[1:]):
        t = np.linspace(0.0, 1.0, points_per_segment, endpoint=False)
        pieces.append(a[None, :] + t[:, None] * (b - a)[None, :])
    pieces.append(vertices[-1:])
    return np.concatenate(pieces)


def band_path(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    path: Sequence[Sequence[float]],
    count: int,
    threads: int = 1,
) -> np.ndarray:
    """Rows (kappa_1..kappa_d, E_1..E_count) along the path"""
    if count > basis.size:
        raise ConfigError(f"count {count} exceeds basis size {basis.size}")
    d = model.dimension
    path = np.asarray(path, dtype=float).reshape(-1, d)
    if len(path) == 0:
        return np.zeros((0, d + count))
    solutions = solve_grid(model, basis, path, threads)
    energies = np.array([s.energies[:count] for s in solutions])
    return np.hstack([path, energies])


def spectrum_symmetry_residual(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    kappas: np.ndarray,
    count: int,
    threads: int = 1,
) -> float:
    """max over kappa and n <= count of |E_n(kappa) - E_n(-kappa)|"""
    kappas = np.atleast_2d(kappas)
    forward = solve_grid(model, basis, kappas, threads)
    backward = solve_grid(model, basis, -kappas, threads)
    return float(
        max(np.max(np.abs(f.energies[:count] - b.energies[:count])) for f, b in zip(forward, backward))
    )


def gauge_transform(model: LatticeModel, chi: FourierScalar) -> LatticeModel:
    """Model with A replaced by A + grad chi; chi must be a real trigonometric polynomial"""
    if not chi.is_real():
        raise ConfigError(f"gauge function is not real-valued (residual {chi.reality_residual():.2e})")
    return model.gauge_transformed(chi)


def gauge_covariance_check(
    model: LatticeModel,
    chi: FourierScalar,
    cutoffs: Sequence[int],
    kappa: Sequence[float],
    count: int,
) -> Dict[int, float]:
    """Largest eigenvalue change under A -> A + grad chi, per cutoff"""
    transformed = gauge_transform(model, chi)
    changes = {}
    for cutoff in cutoffs:
        basis = PlaneWaveBasis(model.dimension, cutoff)
        before = solve_bands(assemble_fiber(model, basis, kappa)).energies[:count]
        after = solve_bands(assemble_fiber(transformed, basis, kappa)).energies[:count]
        changes[cutoff] = float(np.max(np.abs(after - before)))
        logger.info("gauge covariance at N=%d: max eigenvalue change %.3e", cutoff, changes[cutoff])
    return changes
