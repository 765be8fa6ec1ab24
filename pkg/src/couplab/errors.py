"""Exception types shared across the package."""


class CouplabError(Exception):
    """Base class for all errors raised by this package."""


class ZeroMass(CouplabError):
    """A measure with zero (or negative) total mass cannot be normalized."""


class DimensionMismatch(CouplabError):
    """Operands live in different ambient dimensions."""


class InvalidParameter(CouplabError):
    """A parameter is outside its admissible range."""


class InconsistentCoefficients(CouplabError):
    """Diffusion matrix and square-root factor disagree (a != sigma sigma^T)."""


class QuadratureFailure(CouplabError):
    """A quadrature did not reach the requested accuracy or is ill-posed."""


class SizeExceeded(CouplabError):
    """A problem instance is larger than the exact-solve size cap."""


class ConstraintViolated(CouplabError):
    """A solution violates a feasibility or optimality invariant."""


class CFLViolation(CouplabError):
    """Requested time step is larger than the scheme's stability limit."""


class DegenerateCDF(CouplabError):
    """A cumulative distribution function cannot be inverted."""


class PositivityViolated(CouplabError):
    """A quantity that must stay nonnegative went negative beyond tolerance."""


class NonPositiveValues(CouplabError):
    """Log-linear fitting requires strictly positive values."""


class ConfigError(CouplabError):
    """A scenario configuration failed validation.

    Carries the offending field path so the CLI can point at the exact key.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
