"""Exception hierarchy shared across the package."""


class EstimationError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionMismatch(EstimationError, ValueError):
    """Operands have incompatible shapes or widths."""


class NotPositiveDefinite(EstimationError, ArithmeticError):
    """A matrix required to be positive definite failed factorization."""


class Singular(NotPositiveDefinite):
    """An information or sandwich matrix cannot be inverted."""


class Overflow(EstimationError, OverflowError):
    """A linear predictor left the exp-representable range; the iterate diverged."""


class NotConverged(EstimationError, RuntimeError):
    """Iteration budget exhausted before the convergence tolerance was met."""


class InvalidLevel(EstimationError, ValueError):
    """Confidence level or probability outside the open interval (0, 1)."""


class ParseError(EstimationError, ValueError):
    """Malformed input data; the message carries row/column context."""


class NonPositiveResponse(ParseError):
    """A response value is zero or negative."""


class InconsistentWidth(ParseError):
    """Row width or design width differs from what the stream established."""


class CheckpointError(EstimationError):
    """Base class for checkpoint save/load failures."""


class VersionMismatch(CheckpointError):
    """Checkpoint was written with an unsupported format version."""


class DigestMismatch(CheckpointError):
    """Checkpoint content does not match its recorded digest."""


class MethodMismatch(CheckpointError):
    """Checkpoint holds state for a different estimation method."""
