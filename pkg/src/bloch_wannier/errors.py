"""Exception hierarchy; every error carries the process exit code it maps to."""

from typing import Any, Dict, Optional


class BlochWannierError(Exception):
    """Base class for all errors raised by the toolkit"""

    exit_code = 1

    def __init__(
        self,
        message: str,
        *,
        stage: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.details = details or {}

    @property
    def name(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(BlochWannierError):
    """Invalid configuration, model file or call arguments"""

    exit_code = 2


class ModelFileError(ConfigError):
    pass


class DimensionError(ConfigError):
    pass


class IncompleteInputError(ConfigError):
    pass


class CutoffTooSmallError(ConfigError):
    pass


class DegenerateLatticeError(ConfigError):
    pass


class AssumptionError(BlochWannierError):
    """A standing assumption (zero flux, spectral gap, symmetry) does not hold"""

    exit_code = 3


class FluxError(AssumptionError):
    """The field has nonzero flux; no periodic vector potential exists"""


class NotAFieldError(AssumptionError):
    """The antisymmetric matrix is not closed"""


class GapError(AssumptionError):
    """The relevant bands are not isolated on the grid"""


class ParityInapplicableError(AssumptionError):
    pass


class NumericalError(BlochWannierError):
    exit_code = 4


class EigensolverError(NumericalError):
    pass


class GridTooCoarseError(NumericalError):
    pass


class TransportBreakdownError(NumericalError):
    pass


class NumericalDegeneracyError(NumericalError):
    pass


class ObstructionError(BlochWannierError):
    """No global gauge of the requested kind exists on this grid"""

    exit_code = 5


class WindingObstructionError(ObstructionError):
    pass


class TrialFailureError(ObstructionError):
    pass
