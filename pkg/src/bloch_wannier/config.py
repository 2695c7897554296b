"""Run configuration and model documents.

Both are JSON documents validated by pydantic; validation failures become
ConfigError (or ModelFileError) with the offending key path in the message.
"""

import logging
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, ModelFileError
from .model import (
    DEFAULT_FLUX_TOL,
    FieldSpec,
    FourierScalar,
    FourierVector,
    Lattice,
    LatticeModel,
    potential_from_field,
)
from .projector import RelevantSet

logger = logging.getLogger(__name__)

PIPELINES = ("validate", "bands", "symmetry", "chern", "wannier", "tpuv")
Pipeline = Literal["validate", "bands", "symmetry", "chern", "wannier", "tpuv"]


def _even(value: int) -> int:
    if value < 2 or value % 2:
        raise ValueError(f"grid sizes must be even and >= 2, got {value}")
    return value


EvenSize = Annotated[int, AfterValidator(_even)]
PositiveFloat = Annotated[float, Field(gt=0)]
NonNegativeFloat = Annotated[float, Field(ge=0)]


def key_path(location: Sequence[Union[int, str]]) -> str:
    """('grid', 0) -> 'grid[0]', ('tolerances', 'gap') -> 'tolerances.gap'"""
    out = ""
    for part in location:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "<root>"


def describe_errors(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        parts.append(f"{key_path(item['loc'])}: {item['msg']}")
    return "; ".join(parts)


class Tolerances(BaseModel):
    """Numerical thresholds; all strictly positive"""

    gap: PositiveFloat = 1e-6
    trs: PositiveFloat = 1e-6
    flux: PositiveFloat = 1e-10
    integer: PositiveFloat = 1e-3
    symmetry_refuse: PositiveFloat = 1e-3

    model_config = ConfigDict(extra="forbid")


class TrialSpec(BaseModel):
    """Gaussian trial orbital: fractional center and Cartesian width"""

    center: List[float]
    width: PositiveFloat = 0.1


class PathSpec(BaseModel):
    vertices: List[List[float]] = Field(default_factory=list)
    points_per_segment: int = Field(20, ge=1)
    count: int = Field(4, ge=1)


class RunConfig(BaseModel):
    """Everything a pipeline run needs besides the model itself"""

    model: Path
    pipeline: Pipeline = "validate"
    cutoff: int = Field(3, ge=1)
    grid: Optional[List[EvenSize]] = None
    bands: Union[int, List[int]] = 1
    tolerances: Tolerances = Field(default_factory=Tolerances)
    out: Path = Path("out")
    threads: int = Field(1, ge=1)
    trials: List[TrialSpec] = Field(default_factory=list)
    path: Optional[PathSpec] = None
    supercells: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    resolution: Optional[int] = Field(None, ge=1)
    decay_window: Optional[Tuple[NonNegativeFloat, NonNegativeFloat]] = None
    gauge: Literal["auto", "trs", "projection"] = "auto"
    plots: bool = True
    calibration: Optional[Path] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_ranges(self) -> "RunConfig":
        if isinstance(self.bands, int):
            if self.bands < 1:
                raise ValueError("bands must be >= 1")
        elif not self.bands or min(self.bands) < 1:
            raise ValueError("band indices are 1-based and must not be empty")
        if self.decay_window is not None and self.decay_window[1] < self.decay_window[0]:
            raise ValueError("decay_window must be (r_min, r_max) with r_min <= r_max")
        return self

    def relevant(self) -> RelevantSet:
        if isinstance(self.bands, int):
            return RelevantSet.lowest(self.bands)
        return RelevantSet(tuple(b - 1 for b in self.bands))

    def grid_counts(self, dimension: int) -> Tuple[int, ...]:
        if self.grid is None:
            return (16,) * dimension
        if len(self.grid) != dimension:
            raise ConfigError(f"grid has {len(self.grid)} entries for a d = {dimension} model")
        return tuple(self.grid)


def parse_config(text: str) -> RunConfig:
    """Validate a JSON run configuration

    Raises:
        ConfigError: naming the offending key, e.g. ``grid[0]``.
    """
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {describe_errors(e)}") from e


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    return parse_config(text)


class CoefficientEntry(BaseModel):
    n: List[int]
    re: float = 0.0
    im: float = 0.0

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


class FieldEntry(BaseModel):
    """Field component B_jl, planes 1-based"""

    plane: Tuple[int, int]
    coefficients: List[CoefficientEntry] = Field(default_factory=list)


class SyntheticSpec(BaseModel):
    name: Literal["skyrmion", "dirac"]
    mass: Optional[float] = None


class ModelDocument(BaseModel):
    """On-disk model: lattice, V, A (or a zero-flux field B), or a synthetic projector field"""

    dimension: int = Field(ge=1, le=4)
    basis: Optional[List[List[float]]] = None
    potential: List[CoefficientEntry] = Field(default_factory=list)
    vector_potential: Optional[List[List[CoefficientEntry]]] = None
    field: Optional[List[FieldEntry]] = None
    synthetic: Optional[SyntheticSpec] = None
    name: str = "model"

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelDocument":
        d = self.dimension
        if self.basis is not None and (len(self.basis) != d or any(len(row) != d for row in self.basis)):
            raise ValueError(f"basis must be {d} vectors of {d} components")
        if self.vector_potential is not None and len(self.vector_potential) != d:
            raise ValueError(f"vector_potential must have {d} components")
        if self.vector_potential is not None and self.field is not None:
            raise ValueError("give either vector_potential or field, not both")
        entries = list(self.potential)
        for component in self.vector_potential or []:
            entries.extend(component)
        for face in self.field or []:
            entries.extend(face.coefficients)
            if not all(1 <= p <= d for p in face.plane) or face.plane[0] == face.plane[1]:
                raise ValueError(f"field plane {list(face.plane)} is not a coordinate plane of d = {d}")
        for entry in entries:
            if len(entry.n) != d:
                raise ValueError(f"coefficient index {entry.n} does not have {d} components")
        if self.synthetic is not None:
            expected = {"skyrmion": 2, "dirac": 4}[self.synthetic.name]
            if d != expected:
                raise ValueError(f"synthetic {self.synthetic.name} needs dimension {expected}")
        return self

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic is not None

    def lattice(self) -> Lattice:
        if self.basis is None:
            return Lattice.cubic(self.dimension)
        return Lattice.from_basis(self.basis)


def _scalar(dimension: int, entries: Sequence[CoefficientEntry]) -> FourierScalar:
    coefficients: Dict[Tuple[int, ...], complex] = {}
    for entry in entries:
        key = tuple(entry.n)
        coefficients[key] = coefficients.get(key, 0) + entry.value
    return FourierScalar(dimension, coefficients)


def parse_model(text: str) -> ModelDocument:
    try:
        return ModelDocument.model_validate_json(text)
    except ValidationError as e:
        raise ModelFileError(f"invalid model file: {describe_errors(e)}") from e


def load_model_document(path: Path) -> ModelDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFileError(f"cannot read model file {path}: {e}") from e
    return parse_model(text)


def document_field(document: ModelDocument) -> Optional[FieldSpec]:
    if document.field is None:
        return None
    d = document.dimension
    components = {
        (face.plane[0] - 1, face.plane[1] - 1): _scalar(d, face.coefficients) for face in document.field
    }
    return FieldSpec(d, components)


def build_model(document: ModelDocument, flux_tol: float = DEFAULT_FLUX_TOL) -> LatticeModel:
    """Physical model of a document; a field entry goes through the zero-flux check and A from B

    Raises:
        ModelFileError: the document describes a synthetic field.
        FluxError, NotAFieldError: the field admits no periodic vector potential.
    """
    if document.is_synthetic:
        raise ModelFileError(f"{document.name}: synthetic inputs have no Hamiltonian")
    d = document.dimension
    lattice = document.lattice()
    potential = _scalar(d, document.potential)
    field = document_field(document)
    if field is not None:
        vector_potential = potential_from_field(field, lattice, flux_tol)
    elif document.vector_potential is not None:
        vector_potential = FourierVector(tuple(_scalar(d, c) for c in document.vector_potential))
    else:
        vector_potential = FourierVector.zero(d)
    model = LatticeModel(lattice, potential, vector_potential, document.name)
    logger.info("loaded model %s (d=%d, degree %d)", model.name, d, model.cutoff)
    return model


def dump_model(model: LatticeModel) -> ModelDocument:
    """Document of a physical model, the inverse of build_model for potential-based inputs"""

    def entries(scalar: FourierScalar) -> List[CoefficientEntry]:
        return [
            CoefficientEntry(n=list(n), re=float(c.real), im=float(c.imag)) for n, c in sorted(scalar.coefficients.items())
        ]

    return ModelDocument(
        dimension=model.dimension,
        basis=model.lattice.basis.tolist(),
        potential=entries(model.potential),
        vector_potential=[entries(c) for c in model.vector_potential.components],
        name=model.name,
    )