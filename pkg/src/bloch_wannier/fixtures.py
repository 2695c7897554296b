"""Reference inputs: closed-form projector fields and small physical models.

The synthetic fields (two-band skyrmion in d = 2, four-band Dirac in d = 4)
carry no plane-wave basis; they wrap around the zone with identity
embeddings and come with independent mapping-degree oracles.
"""

import itertools
import logging
from typing import Callable, Dict

import numpy as np

from .errors import ConfigError
from .model import FourierScalar, FourierVector, Lattice, LatticeModel
from .projector import KGrid, ProjectorField

logger = logging.getLogger(__name__)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
IDENTITY2 = np.eye(2, dtype=complex)

# five mutually anticommuting Hermitian 4x4 matrices
GAMMAS = (
    np.kron(PAULI[0], PAULI[0]),
    np.kron(PAULI[0], PAULI[1]),
    np.kron(PAULI[0], PAULI[2]),
    np.kron(PAULI[1], IDENTITY2),
    np.kron(PAULI[2], IDENTITY2),
)


def skyrmion_vector(kappa: np.ndarray, mass: float) -> np.ndarray:
    """Unit vector (sin 2pi k1, sin 2pi k2, m - cos 2pi k1 - cos 2pi k2) / norm; kappa (..., 2)"""
    s = np.sin(2 * np.pi * kappa)
    c = np.cos(2 * np.pi * kappa)
    n = np.stack([s[..., 0], s[..., 1], mass - c[..., 0] - c[..., 1]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def dirac_vector(kappa: np.ndarray, mass: float) -> np.ndarray:
    """Unit 5-vector (sin 2pi k_1..4, m - sum cos 2pi k_j) / norm; kappa (..., 4)"""
    s = np.sin(2 * np.pi * kappa)
    n = np.concatenate([s, (mass - np.cos(2 * np.pi * kappa).sum(axis=-1))[..., None]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def skyrmion_projector(kappa: np.ndarray, mass: float = 1.0) -> np.ndarray:
    """(1 - n.sigma) / 2"""
    n = skyrmion_vector(np.asarray(kappa, dtype=float), mass)
    return 0.5 * (np.eye(2) - np.einsum("...a,aij->...ij", n, np.array(PAULI)))


def dirac_projector(kappa: np.ndarray, mass: float = 3.0) -> np.ndarray:
    """(1 - n.Gamma) / 2, rank 2"""
    n = dirac_vector(np.asarray(kappa, dtype=float), mass)
    return 0.5 * (np.eye(4) - np.einsum("...a,aij->...ij", n, np.array(GAMMAS)))


def synthetic_field(
    projector: Callable[[np.ndarray], np.ndarray],
    grid: KGrid,
    rank: int,
    label: str,
) -> ProjectorField:
    """Sample a closed-form projector map on the grid; wraps are plain periodicity"""
    matrices = projector(grid.points())
    size = matrices.shape[-1]
    return ProjectorField(
        grid=grid,
        matrices=matrices,
        rank=rank,
        embeddings=tuple(np.eye(size, dtype=complex) for _ in range(grid.dimension)),
        projector_at=projector,
        label=label,
    )


def skyrmion_field(grid: KGrid, mass: float = 1.0) -> ProjectorField:
    if grid.dimension != 2:
        raise ConfigError(f"skyrmion fixture lives in d = 2, got {grid.dimension}")
    return synthetic_field(lambda k: skyrmion_projector(k, mass), grid, 1, f"skyrmion(m={mass:g})")


def dirac_field(grid: KGrid, mass: float = 3.0) -> ProjectorField:
    if grid.dimension != 4:
        raise ConfigError(f"Dirac fixture lives in d = 4, got {grid.dimension}")
    return synthetic_field(lambda k: dirac_projector(k, mass), grid, 2, f"dirac(m={mass:g})")


def constant_field(grid: KGrid, size: int = 2, rank: int = 1) -> ProjectorField:
    P = np.diag([1.0] * rank + [0.0] * (size - rank)).astype(complex)
    return synthetic_field(lambda k: np.broadcast_to(P, np.shape(k)[:-1] + P.shape).copy(), grid, rank, "constant")


SYNTHETIC: Dict[str, Callable[..., ProjectorField]] = {
    "skyrmion": skyrmion_field,
    "dirac": dirac_field,
}


def skyrmion_degree(mass: float = 1.0, resolution: int = 512) -> int:
    """Round of (1/4pi) sum n.(d1 n x d2 n) over a periodic grid"""
    axis = np.arange(resolution) / resolution
    k = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    n = skyrmion_vector(k, mass)
    d1 = (np.roll(n, -1, axis=0) - np.roll(n, 1, axis=0)) * (resolution / 2.0)
    d2 = (np.roll(n, -1, axis=1) - np.roll(n, 1, axis=1)) * (resolution / 2.0)
    density = np.einsum("...a,...a->...", n, np.cross(d1, d2))
    value = float(density.sum()) / resolution**2 / (4 * np.pi)
    logger.debug("skyrmion density integral %.6f", value)
    return int(round(value))


def dirac_degree(mass: float = 3.0) -> int:
    """Signed preimage count of the south pole (0, 0, 0, 0, -1) of the Dirac map

    The preimages sit at kappa in {0, 1/2}^4 with m - sum cos < 0; the local
    orientation is the sign of the Jacobian of the sine components.
    """
    degree = 0
    for kappa in itertools.product((0.0, 0.5), repeat=4):
        kappa = np.array(kappa)
        cosines = np.cos(2 * np.pi * kappa)
        if mass - cosines.sum() < 0:
            degree -= int(np.prod(np.sign(cosines)))
    return degree


def _cosine(dimension: int, strength: float) -> FourierScalar:
    coeffs = {}
    for j in range(dimension):
        for s in (1, -1):
            n = [0] * dimension
            n[j] = s
            coeffs[tuple(n)] = strength / 2
    return FourierScalar(dimension, coeffs)


def _sine_coefficients(dimension: int, axis: int, amplitude: float) -> FourierScalar:
    """amplitude sin(2 pi y_axis)"""
    plus = [0] * dimension
    plus[axis] = 1
    minus = [0] * dimension
    minus[axis] = -1
    return FourierScalar(dimension, {tuple(plus): -0.5j * amplitude, tuple(minus): 0.5j * amplitude})


def free(dimension: int = 1) -> LatticeModel:
    lattice = Lattice.cubic(dimension)
    return LatticeModel(lattice, FourierScalar.zero(dimension), FourierVector.zero(dimension), "free")


def cos1d(strength: float = 5.0) -> LatticeModel:
    """V = v cos(2 pi y)"""
    return LatticeModel(Lattice.cubic(1), _cosine(1, strength), FourierVector.zero(1), "cos1d")


def cos2d(strength: float = 5.0) -> LatticeModel:
    """V = v (cos 2 pi y1 + cos 2 pi y2) on the square lattice"""
    return LatticeModel(Lattice.cubic(2), _cosine(2, strength), FourierVector.zero(2), "cos2d")


def magnetic_cos2d(strength: float = 5.0, amplitude: float = 0.5) -> LatticeModel:
    """cos2d with A = alpha sin(2 pi y2) e1, a periodic potential with nonzero field"""
    A = FourierVector((_sine_coefficients(2, 1, amplitude), FourierScalar.zero(2)))
    return LatticeModel(Lattice.cubic(2), _cosine(2, strength), A, "magnetic_cos2d")


def gauge_chi(dimension: int, amplitude: float) -> FourierScalar:
    """beta sum_j sin(2 pi y_j)"""
    chi = FourierScalar.zero(dimension)
    for j in range(dimension):
        chi = chi + _sine_coefficients(dimension, j, amplitude)
    return chi


def gauge_cos2d(strength: float = 5.0, amplitude: float = 0.2) -> LatticeModel:
    """cos2d with the pure-gauge potential A = grad chi"""
    model = cos2d(strength).gauge_transformed(gauge_chi(2, amplitude))
    return LatticeModel(model.lattice, model.potential, model.vector_potential, "gauge_cos2d")


def weak4d(strength: float = 0.3) -> LatticeModel:
    """Weak cosine potential in d = 4, connected to the free model"""
    return LatticeModel(Lattice.cubic(4), _cosine(4, strength), FourierVector.zero(4), "weak4d")


PHYSICAL: Dict[str, Callable[..., LatticeModel]] = {
    "free": free,
    "cos1d": cos1d,
    "cos2d": cos2d,
    "magnetic_cos2d": magnetic_cos2d,
    "gauge_cos2d": gauge_cos2d,
    "weak4d": weak4d,
}


def physical(name: str, **parameters: float) -> LatticeModel:
    try:
        factory = PHYSICAL[name]
    except KeyError:
        raise ConfigError(f"unknown fixture {name!r}; choose from {sorted(PHYSICAL)}") from None
    return factory(**parameters)
