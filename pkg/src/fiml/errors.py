"""Exception hierarchy shared by every stage of the pipeline."""


class FimlError(Exception):
    """Base class for all package errors."""


class DomainError(FimlError, ValueError):
    """An argument lies outside the domain of a closure function."""


class ConfigurationError(FimlError, ValueError):
    """Invalid case, grid or run configuration."""


class NumericalFailure(FimlError, ArithmeticError):
    """Non-finite value produced during assembly or a solve."""

    def __init__(self, message, node=None, equation=None, term=None):
        super().__init__(message)
        self.node = node
        self.equation = equation
        self.term = term


class ConvergenceError(FimlError, RuntimeError):
    """An iterative procedure failed to reach its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class DegenerateStateError(FimlError, ValueError):
    """A diagnostic is undefined for the given flow state."""


class ParseError(FimlError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field
