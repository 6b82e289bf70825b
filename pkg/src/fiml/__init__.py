"""Field inversion and learned augmentation of the Spalart-Allmaras model in channel flow."""

__version__ = "0.1.0"

from .channel import CaseConfig, FlowState, build_grid, grid_for, solve_forward, skin_friction  # noqa: E402
from .closure import SAConstants  # noqa: E402
from .errors import (  # noqa: E402
    ConfigurationError,
    ConvergenceError,
    DegenerateStateError,
    DomainError,
    FimlError,
    NumericalFailure,
    ParseError,
)

__all__ = [
    "CaseConfig",
    "FlowState",
    "SAConstants",
    "build_grid",
    "grid_for",
    "solve_forward",
    "skin_friction",
    "FimlError",
    "DomainError",
    "ConfigurationError",
    "NumericalFailure",
    "ConvergenceError",
    "DegenerateStateError",
    "ParseError",
]
