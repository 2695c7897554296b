"""Lattices, periodic potentials and vector potentials as truncated Fourier series.

Coefficients are indexed by integer vectors n with reciprocal vector
G = sum_j n_j e*_j, so a scalar reads f(x) = sum_n f(n) exp(i G.x). The
fundamental cell is the parallelepiped spanned by the basis vectors.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    DegenerateLatticeError,
    DimensionError,
    FluxError,
    ModelFileError,
    NotAFieldError,
)

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]
Plane = Tuple[int, int]

BIORTHOGONALITY_TOL = 1e-12
CLOSEDNESS_TOL = 1e-10
DEFAULT_FLUX_TOL = 1e-10


def dual_lattice(basis: np.ndarray) -> np.ndarray:
    """Dual basis e*_j with e_l . e*_j = 2 pi delta_lj.

    Args:
        basis (np.ndarray): d x d array, row l is the basis vector e_l.

    Returns:
        np.ndarray: d x d array, row j is e*_j.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    d = basis.shape[0]
    if basis.shape != (d, d):
        raise DimensionError(f"basis must be {d} vectors of length {d}, got shape {basis.shape}")
    scale = max(float(np.max(np.abs(basis))), 1.0)
    if abs(np.linalg.det(basis)) <= 1e-12 * scale**d:
        raise DegenerateLatticeError("basis vectors are linearly dependent")
    dual = 2.0 * np.pi * np.linalg.inv(basis).T
    residual = np.max(np.abs(basis @ dual.T - 2.0 * np.pi * np.eye(d)))
    if residual > BIORTHOGONALITY_TOL * 2.0 * np.pi * max(1.0, np.linalg.cond(basis)):
        raise DegenerateLatticeError(f"basis too ill-conditioned, biorthogonality residual {residual:.3e}")
    return dual


@dataclass(frozen=True)
class Lattice:
    """Bravais lattice with its dual basis and cell volume |W|"""

    basis: np.ndarray
    dual: np.ndarray
    volume: float

    @classmethod
    def from_basis(cls, basis: Iterable[Iterable[float]]) -> "Lattice":
        arr = np.atleast_2d(np.asarray(basis, dtype=float))
        if not 1 <= arr.shape[0] <= 4:
            raise DimensionError(f"dimension {arr.shape[0]} not supported (1..4)")
        dual = dual_lattice(arr)
        volume = float(abs(np.linalg.det(arr)))
        return cls(basis=arr, dual=dual, volume=volume)

    @classmethod
    def cubic(cls, dimension: int, spacing: float = 1.0) -> "Lattice":
        return cls.from_basis(spacing * np.eye(dimension))

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def cartesian(self, fractional: np.ndarray) -> np.ndarray:
        """Map fractional coordinates (rows) to Cartesian points"""
        return np.asarray(fractional, dtype=float) @ self.basis

    def reciprocal(self, indices: np.ndarray) -> np.ndarray:
        """Map integer index vectors (rows) to reciprocal vectors G"""
        return np.asarray(indices, dtype=float) @ self.dual

    def momentum(self, kappa: np.ndarray) -> np.ndarray:
        """k = sum_j kappa_j e*_j for reduced momenta kappa"""
        return np.asarray(kappa, dtype=float) @ self.dual

    def face_bivector(self, a: int, b: int) -> np.ndarray:
        """Antisymmetric matrix e_a^i e_b^j - e_a^j e_b^i of the face spanned by e_a, e_b"""
        ea, eb = self.basis[a], self.basis[b]
        return np.outer(ea, eb) - np.outer(eb, ea)

    def face_area(self, a: int, b: int) -> float:
        ea, eb = self.basis[a], self.basis[b]
        return float(np.sqrt(max(ea @ ea * (eb @ eb) - (ea @ eb) ** 2, 0.0)))

    def biorthogonality_residual(self) -> float:
        d = self.dimension
        return float(np.max(np.abs(self.basis @ self.dual.T - 2.0 * np.pi * np.eye(d))))


@dataclass(frozen=True)
class FourierScalar:
    """Finitely many Fourier coefficients of a periodic scalar function"""

    dimension: int
    coefficients: Mapping[Index, complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: Dict[Index, complex] = {}
        for n, c in self.coefficients.items():
            n = tuple(int(v) for v in n)
            if len(n) != self.dimension:
                raise DimensionError(f"index {n} does not have {self.dimension} components")
            if c != 0:
                clean[n] = clean.get(n, 0j) + complex(c)
        object.__setattr__(self, "coefficients", clean)

    @classmethod
    def zero(cls, dimension: int) -> "FourierScalar":
        return cls(dimension, {})

    @classmethod
    def constant(cls, dimension: int, value: complex) -> "FourierScalar":
        return cls(dimension, {(0,) * dimension: value})

    @classmethod
    def from_dense(cls, dense: np.ndarray, tol: float = 0.0) -> "FourierScalar":
        """Inverse of `to_dense`; entries with modulus <= tol are dropped"""
        d = dense.ndim
        cutoff = (dense.shape[0] - 1) // 2
        coeffs = {}
        for pos in zip(*np.nonzero(np.abs(dense) > tol)):
            coeffs[tuple(int(p) - cutoff for p in pos)] = complex(dense[pos])
        return cls(d, coeffs)

    @property
    def cutoff(self) -> int:
        if not self.coefficients:
            return 0
        return max(max(abs(v) for v in n) for n in self.coefficients)

    def __getitem__(self, n: Index) -> complex:
        return self.coefficients.get(tuple(n), 0j)

    def __iter__(self) -> Iterator[Tuple[Index, complex]]:
        return iter(self.coefficients.items())

    def __len__(self) -> int:
        return len(self.coefficients)

    def __add__(self, other: "FourierScalar") -> "FourierScalar":
        merged = dict(self.coefficients)
        for n, c in other.coefficients.items():
            merged[n] = merged.get(n, 0j) + c
        return FourierScalar(self.dimension, merged)

    def scaled(self, factor: complex) -> "FourierScalar":
        return FourierScalar(self.dimension, {n: factor * c for n, c in self.coefficients.items()})

    def is_zero(self) -> bool:
        return not self.coefficients

    def reality_residual(self) -> float:
        """max |f(-n) - conj f(n)|; zero for real-valued functions"""
        worst = 0.0
        for n, c in self.coefficients.items():
            mirror = self[tuple(-v for v in n)]
            worst = max(worst, abs(mirror - np.conj(c)))
        return worst

    def is_real(self, tol: float = 1e-12) -> bool:
        return self.reality_residual() <= tol

    def is_even(self, tol: float = 1e-12) -> bool:
        return all(abs(self[tuple(-v for v in n)] - c) <= tol for n, c in self.coefficients.items())

    def to_dense(self, cutoff: Optional[int] = None) -> np.ndarray:
        """Centered array of shape (2K+1,)*d; entry [n + K] holds f(n)"""
        cutoff = self.cutoff if cutoff is None else cutoff
        dense = np.zeros((2 * cutoff + 1,) * self.dimension, dtype=complex)
        for n, c in self.coefficients.items():
            if max(abs(v) for v in n) > cutoff:
                continue
            dense[tuple(v + cutoff for v in n)] = c
        return dense

    def _arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.coefficients:
            return np.zeros((0, self.dimension)), np.zeros(0, dtype=complex)
        keys = list(self.coefficients)
        return np.array(keys, dtype=float), np.array([self.coefficients[k] for k in keys])

    def evaluate(self, lattice: Lattice, points: np.ndarray) -> np.ndarray:
        """Values at Cartesian points (rows)"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        indices, values = self._arrays()
        if values.size == 0:
            return np.zeros(points.shape[0], dtype=complex)
        phases = np.exp(1j * points @ lattice.reciprocal(indices).T)
        return phases @ values


@dataclass(frozen=True)
class FourierVector:
    """Cartesian components of a periodic vector potential"""

    components: Tuple[FourierScalar, ...]

    def __post_init__(self) -> None:
        d = len(self.components)
        if any(c.dimension != d for c in self.components):
            raise DimensionError("vector potential components must all have dimension d")

    @classmethod
    def zero(cls, dimension: int) -> "FourierVector":
        return cls(tuple(FourierScalar.zero(dimension) for _ in range(dimension)))

    @property
    def dimension(self) -> int:
        return len(self.components)

    @property
    def cutoff(self) -> int:
        return max((c.cutoff for c in self.components), default=0)

    def __getitem__(self, j: int) -> FourierScalar:
        return self.components[j]

    def __add__(self, other: "FourierVector") -> "FourierVector":
        return FourierVector(tuple(a + b for a, b in zip(self.components, other.components)))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def reality_residual(self) -> float:
        return max((c.reality_residual() for c in self.components), default=0.0)

    def indices(self) -> List[Index]:
        keys = set()
        for c in self.components:
            keys.update(c.coefficients)
        return sorted(keys)

    def to_dense(self, cutoff: Optional[int] = None) -> np.ndarray:
        """Array of shape (d, 2K+1, ..., 2K+1)"""
        cutoff = self.cutoff if cutoff is None else cutoff
        return np.stack([c.to_dense(cutoff) for c in self.components])

    def evaluate(self, lattice: Lattice, points: np.ndarray) -> np.ndarray:
        """Real (P, d) array of A at Cartesian points"""
        return np.stack([c.evaluate(lattice, points).real for c in self.components], axis=-1)

    def as_function(self, lattice: Lattice) -> Callable[[np.ndarray], np.ndarray]:
        return lambda points: self.evaluate(lattice, points)


@dataclass(frozen=True)
class FieldSpec:
    """Antisymmetric magnetic field B_jl, stored for j < l"""

    dimension: int
    components: Mapping[Plane, FourierScalar] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: Dict[Plane, FourierScalar] = {}
        for (j, l), comp in self.components.items():
            if j == l:
                if not comp.is_zero():
                    raise NotAFieldError(f"diagonal component B_{j + 1}{l + 1} must vanish")
                continue
            if j > l:
                j, l, comp = l, j, comp.scaled(-1.0)
            clean[(j, l)] = clean[(j, l)] + comp if (j, l) in clean else comp
        object.__setattr__(self, "components", clean)

    @classmethod
    def zero(cls, dimension: int) -> "FieldSpec":
        return cls(dimension, {})

    def component(self, j: int, l: int) -> FourierScalar:
        if j == l:
            return FourierScalar.zero(self.dimension)
        if j < l:
            return self.components.get((j, l), FourierScalar.zero(self.dimension))
        return self.components.get((l, j), FourierScalar.zero(self.dimension)).scaled(-1.0)

    def planes(self) -> List[Plane]:
        return list(itertools.combinations(range(self.dimension), 2))

    def indices(self) -> List[Index]:
        keys = set()
        for comp in self.components.values():
            keys.update(comp.coefficients)
        return sorted(keys)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for comp in self.components.values() for _, c in comp)

    def max_difference(self, other: "FieldSpec") -> float:
        worst = 0.0
        for j, l in self.planes():
            a, b = self.component(j, l), other.component(j, l)
            for n in set(a.coefficients) | set(b.coefficients):
                worst = max(worst, abs(a[n] - b[n]))
        return worst


@dataclass(frozen=True)
class LatticeModel:
    """The physical problem: lattice, scalar potential V and vector potential A"""

    lattice: Lattice
    potential: FourierScalar
    vector_potential: FourierVector
    name: str = "model"

    def __post_init__(self) -> None:
        d = self.lattice.dimension
        if self.potential.dimension != d or self.vector_potential.dimension != d:
            raise DimensionError(f"potentials do not match lattice dimension {d}")
        if not self.potential.is_real(1e-12):
            raise ModelFileError(f"potential of {self.name!r} is not real-valued (coefficients not conjugate-symmetric)")
        if self.vector_potential.reality_residual() > 1e-12:
            raise ModelFileError(f"vector potential of {self.name!r} is not real-valued")

    @property
    def dimension(self) -> int:
        return self.lattice.dimension

    @property
    def cutoff(self) -> int:
        """Largest coefficient index of V, A and A.A"""
        return max(self.potential.cutoff, 2 * self.vector_potential.cutoff)

    def with_vector_potential(self, vector_potential: FourierVector) -> "LatticeModel":
        return LatticeModel(self.lattice, self.potential, vector_potential, self.name)

    def gauge_transformed(self, chi: FourierScalar) -> "LatticeModel":
        """Same model with A replaced by A + grad chi"""
        return self.with_vector_potential(self.vector_potential + gradient(chi, self.lattice))

    def magnetic_field(self) -> FieldSpec:
        return field_from_potential(self.vector_potential, self.lattice)


def gradient(chi: FourierScalar, lattice: Lattice) -> FourierVector:
    """grad chi: component l has coefficients i G_l chi(n)"""
    d = lattice.dimension
    comps = []
    for l in range(d):
        coeffs = {}
        for n, c in chi:
            G = lattice.reciprocal(n)
            coeffs[n] = 1j * G[l] * c
        comps.append(FourierScalar(d, coeffs))
    return FourierVector(tuple(comps))


def quadrature_order(cutoff: int, omega: float = 0.0) -> int:
    """Gauss-Legendre order for a trigonometric integrand of the given degree and phase span"""
    return 2 * cutoff + 4 + int(np.ceil(abs(omega)))


def line_integral(
    potential: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    x1: np.ndarray,
    order: int,
) -> float:
    """int_0^1 A(x0 + t (x1 - x0)) . (x1 - x0) dt for any vector field callable"""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    delta = x1 - x0
    nodes, weights = leggauss(order)
    t = 0.5 * (nodes + 1.0)
    values = potential(x0[None, :] + t[:, None] * delta[None, :])
    return float(0.5 * weights @ (values @ delta))


def line_integral_A(
    A: FourierVector,
    lattice: Lattice,
    x0: np.ndarray,
    x1: np.ndarray,
    order: Optional[int] = None,
) -> float:
    """Circulation of A along the straight segment [x0, x1] (Cartesian endpoints)"""
    if A.is_zero():
        return 0.0
    if order is None:
        delta = np.asarray(x1, dtype=float) - np.asarray(x0, dtype=float)
        indices = np.array(A.indices(), dtype=float)
        omega = float(np.max(np.abs(lattice.reciprocal(indices) @ delta))) if len(indices) else 0.0
        order = quadrature_order(A.cutoff, omega)
    return line_integral(A.as_function(lattice), x0, x1, order)


def segment_circulations(
    A: FourierVector,
    lattice: Lattice,
    starts: np.ndarray,
    delta: np.ndarray,
    order: Optional[int] = None,
) -> np.ndarray:
    """Circulations of A along [x, x + delta] for every Cartesian start x (rows)"""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    delta = np.asarray(delta, dtype=float)
    if A.is_zero() or len(starts) == 0:
        return np.zeros(len(starts))
    if order is None:
        indices = np.array(A.indices(), dtype=float)
        omega = float(np.max(np.abs(lattice.reciprocal(indices) @ delta)))
        order = quadrature_order(A.cutoff, omega)
    nodes, weights = leggauss(order)
    t = 0.5 * (nodes + 1.0)
    points = starts[:, None, :] + t[None, :, None] * delta[None, None, :]
    values = A.evaluate(lattice, points.reshape(-1, A.dimension)).reshape(len(starts), order, A.dimension)
    return 0.5 * (values @ delta) @ weights


def field_from_potential(A: FourierVector, lattice: Lattice) -> FieldSpec:
    """B_jl(n) = i (G_j A_l(n) - G_l A_j(n))"""
    d = lattice.dimension
    components: Dict[Plane, FourierScalar] = {}
    indices = A.indices()
    for j, l in itertools.combinations(range(d), 2):
        coeffs = {}
        for n in indices:
            G = lattice.reciprocal(n)
            value = 1j * (G[j] * A[l][n] - G[l] * A[j][n])
            if value != 0:
                coeffs[n] = value
        components[(j, l)] = FourierScalar(d, coeffs)
    return FieldSpec(d, components)


def zero_flux_check(B: FieldSpec, lattice: Lattice) -> Dict[Plane, float]:
    """Flux of B through each origin face spanned by e_a, e_b.

    Only coefficients with n_a = n_b = 0 survive the face average.
    """
    d = lattice.dimension
    fluxes: Dict[Plane, float] = {}
    for a, b in itertools.combinations(range(d), 2):
        bivector = lattice.face_bivector(a, b)
        total = 0j
        for i, j in itertools.combinations(range(d), 2):
            weight = bivector[i, j]
            if weight == 0:
                continue
            for n, c in B.component(i, j):
                if n[a] == 0 and n[b] == 0:
                    total += weight * c
        fluxes[(a, b)] = float(total.real)
        if abs(total.imag) > 1e-12:
            logger.warning("flux through face %s has imaginary part %.3e", (a + 1, b + 1), total.imag)
    return fluxes


def closedness_residual(B: FieldSpec, lattice: Lattice) -> float:
    """max over n != 0 and j<m<l of |G_j B_ml + G_m B_lj + G_l B_jm|"""
    d = lattice.dimension
    worst = 0.0
    for n in B.indices():
        if not any(n):
            continue
        G = lattice.reciprocal(n)
        for j, m, l in itertools.combinations(range(d), 3):
            value = (
                G[j] * B.component(m, l)[n]
                + G[m] * B.component(l, j)[n]
                + G[l] * B.component(j, m)[n]
            )
            worst = max(worst, abs(value))
    return worst


def potential_from_field(
    B: FieldSpec,
    lattice: Lattice,
    flux_tol: float = DEFAULT_FLUX_TOL,
) -> FourierVector:
    """Coulomb-gauge periodic vector potential with A(0) = 0.

    A_l(n) = -i sum_j G_j B_jl(n) / |G|^2 for n != 0.
    """
    d = lattice.dimension
    residual = closedness_residual(B, lattice)
    if residual > CLOSEDNESS_TOL:
        raise NotAFieldError(f"field is not closed, Bianchi residual {residual:.3e}")
    fluxes = zero_flux_check(B, lattice)
    for (a, b), flux in fluxes.items():
        if abs(flux) > flux_tol * lattice.face_area(a, b):
            raise FluxError(
                f"flux {flux:.3e} through face ({a + 1},{b + 1}); no periodic vector potential exists",
                details={"fluxes": {f"{p[0] + 1},{p[1] + 1}": v for p, v in fluxes.items()}},
            )
    comps: List[Dict[Index, complex]] = [{} for _ in range(d)]
    for n in B.indices():
        if not any(n):
            continue
        G = lattice.reciprocal(n)
        norm2 = float(G @ G)
        for l in range(d):
            value = -1j * sum(G[j] * B.component(j, l)[n] for j in range(d)) / norm2
            if value != 0:
                comps[l][n] = value
    return FourierVector(tuple(FourierScalar(d, c) for c in comps))
