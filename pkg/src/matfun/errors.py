"""Exception hierarchy shared by all matfun modules."""


class MatfunError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MatfunError):
    """Operands have incompatible or invalid dimensions."""


class SingularMatrixError(MatfunError):
    """A pivot fell below the elimination threshold."""


class ConvergenceError(MatfunError):
    """An iterative solver hit its iteration cap before converging."""


class SpectralDomainError(MatfunError):
    """The spectrum violates the domain condition of the requested function."""


class OverflowRangeError(MatfunError):
    """A result entry left the representable float range."""


class CodecError(MatfunError):
    """Base class for tokenization errors."""


class ExponentRangeError(CodecError):
    """Value needs an exponent outside the scheme's representable range."""


class MalformedSequenceError(CodecError):
    """Token run cannot be parsed under the scheme."""


class BudgetError(MatfunError):
    """A network construction would exceed the configured weight budget."""


class CertificationError(MatfunError):
    """Sampled error of a constructed network exceeded its target."""


class RejectionCapError(MatfunError):
    """Domain rejection resampling exceeded its draw cap."""


class DatasetError(MatfunError):
    """Dataset file is inconsistent with its manifest or corrupt."""


class TrainingDivergedError(MatfunError):
    """Loss became non-finite during training."""
