"""Exception hierarchy shared by all modules."""


class NewtonResError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(NewtonResError, ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class PreconditionError(ConfigurationError):
    """An operation was called outside its admissible input range."""


class ParseError(ConfigurationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ConfigurationError):
    """The discretized domain violates a structural requirement."""


class GeometryError(ConfigurationError):
    """A point was placed where the scattering geometry forbids it."""


class NumericalError(NewtonResError, ArithmeticError):
    """Numerical failure (CLI exit code 3)."""


class AssemblyError(NumericalError):
    pass


class SolverError(NumericalError):
    def __init__(self, message, last_residual=None):
        self.last_residual = last_residual
        super().__init__(message)


class SheetError(SolverError):
    """A converged characteristic point left the lower half-plane."""


class PathError(NumericalError):
    pass


class OracleError(NumericalError):
    pass


class RankError(NumericalError):
    """The contour moment matrix did not reveal a clear rank."""


class ResonanceProximityError(NumericalError):
    pass


class HypothesisNotMet(NewtonResError):
    """The smallness hypothesis of the localization result does not hold.

    This is a skipped check, not a failed one.
    """
