"""Magnetic time reversal, magnetic parity and the magnetic-translation cocycle.

The fiber operators act on plane-wave coefficient vectors by collocation:
synthesize u(y) on the points y = i/R of the cell, multiply by the phase
samples (conjugating for time reversal, reflecting y -> -y for parity) and
analyze back. With R = 2N + 1 points per axis the discrete transform is
square and unitary, so time reversal squares to the identity exactly.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from .bloch import PlaneWaveBasis
from .errors import ConfigError, ParityInapplicableError
from .model import FourierVector, Lattice, LatticeModel, line_integral, line_integral_A
from .projector import ProjectorField

logger = logging.getLogger(__name__)

UNIMODULAR_TOL = 1e-12
TIME_REVERSAL_FACTOR = 2.0

VectorField = Callable[[np.ndarray], np.ndarray]


def collocation_points(dimension: int, resolution: int) -> np.ndarray:
    """(R^d, d) fractional points i/R, lexicographic"""
    axis = np.arange(resolution) / resolution
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def synthesis_matrix(basis: PlaneWaveBasis, points: np.ndarray, sign: int = 1) -> np.ndarray:
    """F[y, n] = exp(2 pi i sign n.y) / sqrt(R^d)"""
    return np.exp(2j * np.pi * sign * points @ basis.indices.T) / np.sqrt(len(points))


@dataclass(frozen=True)
class PhaseFunction:
    points: np.ndarray
    samples: np.ndarray
    factor: float
    resolution: int

    def __post_init__(self) -> None:
        deviation = float(np.max(np.abs(np.abs(self.samples) - 1.0))) if self.samples.size else 0.0
        if deviation > UNIMODULAR_TOL:
            raise ConfigError(f"phase samples are not unimodular (deviation {deviation:.2e})")

    @classmethod
    def trivial(cls, dimension: int, resolution: int, factor: float = 1.0) -> "PhaseFunction":
        points = collocation_points(dimension, resolution)
        return cls(points, np.ones(len(points), dtype=complex), factor, resolution)


def phase_grid(
    A: Union[FourierVector, VectorField],
    lattice: Lattice,
    factor: float,
    resolution: int,
    order: Optional[int] = None,
) -> PhaseFunction:
    """exp(i c int_[0,y] A) at the collocation points of the cell

    Args:
        A: a Fourier vector potential, or any callable mapping (P, d) Cartesian points to (P, d) values.
        lattice (Lattice): the lattice whose cell is sampled.
        factor (float): the constant c.
        resolution (int): points per axis.
        order (int, optional): quadrature order for callables (default 16).
    """
    d = lattice.dimension
    if resolution < 1:
        raise ConfigError(f"resolution must be positive, got {resolution}")
    points = collocation_points(d, resolution)
    if isinstance(A, FourierVector) and A.is_zero():
        return PhaseFunction(points, np.ones(len(points), dtype=complex), factor, resolution)
    origin = np.zeros(d)
    cartesian = lattice.cartesian(points)
    if isinstance(A, FourierVector):
        integrals = np.array([line_integral_A(A, lattice, origin, x, order) for x in cartesian])
    else:
        integrals = np.array([line_integral(A, origin, x, order or 16) for x in cartesian])
    return PhaseFunction(points, np.exp(1j * factor * integrals), factor, resolution)


def _even_part(A: FourierVector, lattice: Lattice) -> VectorField:
    field = A.as_function(lattice)
    return lambda points: field(points) + field(-points)


@dataclass(frozen=True)
class AntiunitaryFiberOp:
    """Collocated fiber operator v -> U conj(v) (conjugation on) or v -> U v (off)"""

    phase: PhaseFunction
    conjugation: bool
    matrix: np.ndarray
    name: str = "J"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=complex)
        return self.matrix @ (vectors.conj() if self.conjugation else vectors)

    def conjugate_projectors(self, matrices: np.ndarray) -> np.ndarray:
        """O P O^{-1} for a stack of matrices"""
        U = self.matrix
        if self.conjugation:
            return U @ matrices.conj() @ U.conj()
        return U @ matrices @ U.conj().T

    def involution_residual(self) -> float:
        """max |O(O e_n) - e_n| over basis vectors"""
        identity = np.eye(self.size, dtype=complex)
        return float(np.max(np.abs(self.apply(self.apply(identity)) - identity)))


def plain_conjugation(size: int, dimension: int = 1) -> AntiunitaryFiberOp:
    """Complex conjugation of the coefficients, the time reversal of synthetic fields"""
    return AntiunitaryFiberOp(
        phase=PhaseFunction.trivial(dimension, 1),
        conjugation=True,
        matrix=np.eye(size, dtype=complex),
        name="conjugation",
    )


def _resolution(basis: PlaneWaveBasis, resolution: Optional[int]) -> int:
    minimum = 2 * basis.cutoff + 1
    resolution = minimum if resolution is None else resolution
    if resolution < minimum:
        raise ConfigError(f"collocation resolution {resolution} below 2N+1 = {minimum}")
    return resolution


def time_reversal(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    resolution: Optional[int] = None,
) -> AntiunitaryFiberOp:
    """Fiber time reversal psi -> exp(2i int_[0,y] A) psi*"""
    resolution = _resolution(basis, resolution)
    phase = phase_grid(model.vector_potential, model.lattice, TIME_REVERSAL_FACTOR, resolution)
    F = synthesis_matrix(basis, phase.points)
    U = F.conj().T @ (phase.samples[:, None] * F.conj())
    op = AntiunitaryFiberOp(phase=phase, conjugation=True, matrix=U, name="time_reversal")
    logger.debug("time reversal at R=%d: involution residual %.2e", resolution, op.involution_residual())
    return op


def parity(
    model: LatticeModel,
    basis: PlaneWaveBasis,
    resolution: Optional[int] = None,
) -> AntiunitaryFiberOp:
    """Fiber parity psi -> exp(i int_[0,y] (A(.) + A(-.))) psi(-y)

    Raises:
        ParityInapplicableError: when the scalar potential is not even.
    """
    if not model.potential.is_even():
        raise ParityInapplicableError(f"{model.name}: potential is not even, parity does not apply")
    resolution = _resolution(basis, resolution)
    if model.vector_potential.is_zero():
        phase = PhaseFunction.trivial(model.dimension, resolution)
    else:
        phase = phase_grid(_even_part(model.vector_potential, model.lattice), model.lattice, 1.0, resolution)
    F = synthesis_matrix(basis, phase.points)
    reflected = synthesis_matrix(basis, phase.points, sign=-1)
    U = F.conj().T @ (phase.samples[:, None] * reflected)
    return AntiunitaryFiberOp(phase=phase, conjugation=False, matrix=U, name="parity")


def apply_J(op: AntiunitaryFiberOp, vectors: np.ndarray) -> np.ndarray:
    return op.apply(vectors)


def _symmetry_residual(field: ProjectorField, op: AntiunitaryFiberOp) -> float:
    if op.size != field.size:
        raise ConfigError(f"operator of size {op.size} does not act on fibers of size {field.size}")
    worst = 0.0
    for index in field.grid.indices():
        mapped = op.conjugate_projectors(field.at(index))
        worst = max(worst, float(np.linalg.norm(mapped - field.negative(index), ord=2)))
    return worst


def trs_projector_residual(field: ProjectorField, op: AntiunitaryFiberOp) -> float:
    """max over the grid of ||J P(kappa) J^{-1} - P(-kappa)||"""
    residual = _symmetry_residual(field, op)
    logger.info("%s: time-reversal residual %.3e", field.label, residual)
    return residual


def parity_projector_residual(field: ProjectorField, op: AntiunitaryFiberOp) -> float:
    """max over the grid of ||Pi P(kappa) Pi^{-1} - P(-kappa)||"""
    if op.conjugation:
        raise ConfigError("parity residual needs a linear (non-conjugating) operator")
    residual = _symmetry_residual(field, op)
    logger.info("%s: parity residual %.3e", field.label, residual)
    return residual


@dataclass(frozen=True)
class LinearPotential:
    """A(x) = x B / 2 for a constant antisymmetric field B (not periodic)"""

    field: np.ndarray

    def __post_init__(self) -> None:
        B = np.asarray(self.field, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or not np.allclose(B, -B.T):
            raise ConfigError("constant field must be a square antisymmetric matrix")
        object.__setattr__(self, "field", B)

    @classmethod
    def planar(cls, strength: float) -> "LinearPotential":
        """A = B0 (-x2, x1) / 2"""
        return cls(np.array([[0.0, strength], [-strength, 0.0]]))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return 0.5 * np.atleast_2d(points) @ self.field

    def cocycle(self, gamma1: np.ndarray, gamma2: np.ndarray) -> float:
        """Flux through the triangle (x, x + gamma1, x + gamma1 + gamma2)"""
        return float(0.5 * np.asarray(gamma1) @ self.field @ np.asarray(gamma2))


def magnetic_translation_cocycle(
    A: Union[FourierVector, VectorField],
    lattice: Lattice,
    gamma1: Sequence[int],
    gamma2: Sequence[int],
    samples: np.ndarray,
    order: int = 16,
) -> np.ndarray:
    """Phase Phi(x) with T_g1 T_g2 = exp(-i Phi) T_(g1+g2), at Cartesian sample points

    T_g carries exp(i lambda_g(x)) with lambda_g(x) = -int_[g, x+g] A + int_[0, x] A.
    """
    g1 = lattice.cartesian(np.asarray(gamma1, dtype=float))
    g2 = lattice.cartesian(np.asarray(gamma2, dtype=float))
    if isinstance(A, FourierVector):
        def integral(x0: np.ndarray, x1: np.ndarray) -> float:
            return line_integral_A(A, lattice, x0, x1)
    else:
        def integral(x0: np.ndarray, x1: np.ndarray) -> float:
            return line_integral(A, x0, x1, order)

    origin = np.zeros(lattice.dimension)

    def phase(gamma: np.ndarray, x: np.ndarray) -> float:
        return -integral(gamma, x + gamma) + integral(origin, x)

    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    return np.array(
        [phase(g1 + g2, x) - phase(g1, x) - phase(g2, x - g1) for x in samples]
    )


class SymmetryCheck(BaseModel):
    """One row of the symmetry report"""

    check: str
    residual: float
    tolerance: float
    passed: bool
    cutoff: int
